//! Write a synthetic demo dataset (CSV on stdout) drawn from the desk-scale
//! process: two binary and one continuous covariate, binary exposure, one
//! binary and one continuous mediator, binary outcome.
//!
//! Usage: cargo run -p mediate --example gen_demo_data -- [n] [seed] > demo.csv

use mediate::simlab::{generate, presets};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1200);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let ds = generate(&presets::dgp_desk_binary(), n, seed).expect("generation");
    println!("c1,c2,c3,a,mb,mc,y");
    for i in 0..ds.n() {
        println!(
            "{},{},{},{},{},{},{}",
            ds.numeric("c1").unwrap()[i],
            ds.numeric("c2").unwrap()[i],
            ds.numeric("c3").unwrap()[i],
            ds.exposure()[i],
            ds.numeric("mb").unwrap()[i],
            ds.numeric("mc").unwrap()[i],
            ds.outcome().unwrap()[i],
        );
    }
}
