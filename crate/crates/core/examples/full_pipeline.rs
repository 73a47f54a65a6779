//! Runs `ingest → train → evaluate → backtest → report` on the bundled
//! sample through the same entry point as the `fxcast` binary.
//!
//! ```text
//! cargo run --release --example full_pipeline [out_dir]
//! ```
//!
//! Settings come from `data/sample.conf`. Expect well under a minute in
//! release mode.

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "fxcast_run".into());
    let sample = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_usdbdt.csv");
    let conf = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample.conf");

    let stages: [&[&str]; 5] = [
        &["ingest", "--input", sample],
        &["train", "--config", conf],
        &["evaluate"],
        &["backtest"],
        &["report"],
    ];
    for stage in stages {
        let mut args = vec!["fxcast"];
        args.extend_from_slice(stage);
        args.extend_from_slice(&["--out", &out]);
        let started = std::time::Instant::now();
        let code = fxcast::cli::run(args);
        println!("{:<9} exit {code}  {:.1}s", stage[0], started.elapsed().as_secs_f64());
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("\nreport written to {out}/report.md");
}
