//! Emit the synthetic spec + capture pair so the CLI can be tried without a
//! real dataset:
//!
//! ```text
//! cargo run -p flowbench --example gen_fixture -- <dir> [scale] [seed]
//! ```
//!
//! Smaller `scale` means more rows; 80 matches the acceptance suite.

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = match args.next() {
        Some(d) => PathBuf::from(d),
        None => {
            eprintln!("usage: gen_fixture <dir> [scale] [seed]");
            std::process::exit(2);
        }
    };
    let scale = args.next().map_or(80, |s| s.parse().expect("scale must be a positive integer"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed must be a u64"));
    let (spec, data) = flowbench::synth::write_dataset(&dir, scale, seed)?;
    println!("{}", spec.display());
    println!("{}", data.display());
    Ok(())
}
