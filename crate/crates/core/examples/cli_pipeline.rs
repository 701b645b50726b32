//! The command-line workflow driven in-process: ingest, profiles,
//! negatives, two training runs, eval and a report, all offline.

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cli(args: &[&str]) -> negrec::Result<()> {
    negrec::cli::run_args(std::iter::once("negrec").chain(args.iter().copied()))
}

fn main() -> negrec::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let p = |name: &str| root.join(name).display().to_string();

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut csv = String::from("user_id,item_id,rating,timestamp\n");
    for u in 0..60 {
        for t in 0..10 {
            csv += &format!("u{u},i{},1,{t}\n", rng.random_range(0..80));
        }
    }
    fs::write(root.join("inter.csv"), csv)?;
    fs::write(
        root.join("exp.cfg"),
        format!(
            "data.split = {}\ndata.profiles = {}\ndata.negatives = {}\nrun.dir = {}\ntrainer.epochs = 5\n",
            p("split"),
            p("profiles.jsonl"),
            p("negatives.jsonl"),
            p("runs")
        ),
    )?;
    let cfg = p("exp.cfg");

    cli(&["ingest", "--input", &p("inter.csv"), "--out", &p("split")])?;
    cli(&["--config", &cfg, "profiles"])?;
    cli(&["--config", &cfg, "sample-negatives"])?;
    cli(&[
        "--config",
        &cfg,
        "train",
        "--sampler",
        "semantic",
        "--curve",
    ])?;
    cli(&[
        "--config",
        &cfg,
        "--set",
        "loss.alpha=0.75",
        "train",
        "--sampler",
        "semantic",
    ])?;
    cli(&["--config", &cfg, "train", "--sampler", "rns"])?;

    let mut runs: Vec<String> = fs::read_dir(root.join("runs"))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("run_log.csv").exists())
        .map(|p| p.display().to_string())
        .collect();
    runs.sort();
    for run in &runs {
        cli(&["--config", &cfg, "eval", "--run", run, "--strata"])?;
    }
    let mut args = vec!["report"];
    args.extend(runs.iter().map(String::as_str));
    let out = p("report");
    args.extend(["--out", &out]);
    cli(&args)?;
    for f in ["convergence.csv", "alpha.csv", "strata.csv"] {
        let text = fs::read_to_string(root.join("report").join(f))?;
        println!("== {f} ({} rows)", text.lines().count() - 1);
        for line in text.lines().take(6) {
            println!("{line}");
        }
    }
    Ok(())
}
