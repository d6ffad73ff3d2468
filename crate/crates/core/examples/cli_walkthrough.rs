//! Drives the operator commands as library calls: setup, then an in-process
//! simulated election from the written files.
//!
//! Run with `cargo run --example cli_walkthrough`.

use clap::Parser;
use homotally::cli::{run, Cli};

pub fn run_example() -> homotally::Result<()> {
    let dir = std::env::temp_dir().join(format!("homotally-cli-{}", std::process::id()));
    let d = dir.to_str().expect("utf-8 temp dir");
    let config = format!("{d}/config.json");
    let steps: [Vec<&str>; 2] = [
        vec!["homotally", "setup", "--candidates", "Ann,Ben", "--voters", "5", "--threshold", "2", "--centers", "3", "--out-dir", d, "--seed", "9"],
        vec!["homotally", "simulate", "--config", &config, "--votes", "Ann,Ben,Ann", "--seed", "9"],
    ];
    for argv in steps {
        println!("$ {}", argv[1..].join(" "));
        let code = run(Cli::parse_from(argv), &mut std::io::stdout(), &mut std::io::stderr());
        assert_eq!(code, 0);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
