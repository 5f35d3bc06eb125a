use std::path::Path;
use std::process::Command;

use sublora::pipeline::Stage;

fn sublora(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sublora")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path) -> String {
    let cfg = serde_json::json!({
        "schema": 1,
        "run_id": "cli-test",
        "problem": { "family": "elliptic", "lambda": [1.0, 1.0] },
        "network": { "widths": [2, 8, 8, 8, 1], "rank": 2 },
        "counts": { "interior": 48, "boundary": 16, "test": 50 },
        "determination": { "interior": 48, "boundary": 16 },
        "pretrain_epochs": 5,
        "finetune_epochs": 5,
        "budget": 2,
        "budgets": [1, 4],
        "outer_rounds": 2,
        "output_dir": "out"
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let (code, _, err) = sublora(&["finetune", &cfg]);
    assert_eq!(code, 1, "finetune before pretrain is a usage error");
    assert!(err.contains("pretrain"), "{err}");

    for args in [
        vec!["pretrain", &cfg],
        vec!["finetune", &cfg],
        vec!["prune", &cfg, "--method", "sub_r", "--budget", "3", "--seed", "9"],
        vec!["sweep", &cfg],
        vec!["alternate", &cfg, "--method", "linear", "--freeze-pruned"],
    ] {
        let (code, out, err) = sublora(&args);
        assert_eq!(code, 0, "{args:?}\n{out}\n{err}");
    }

    let metrics = sublora::metrics::read_metrics(&dir.path().join("out/metrics.csv")).unwrap();
    // pretrain, finetune, one prune, 5 methods x 2 budgets, 2 rounds x 2 stages + final.
    assert_eq!(metrics.len(), 1 + 1 + 1 + 10 + 5);
    for r in metrics.iter().filter(|r| matches!(r.stage, Stage::Prune | Stage::Final)) {
        assert!(r.kept_per_layer.iter().sum::<usize>() <= r.budget.unwrap(), "{r:?}");
    }

    let ck = dir.path().join("out/cli-test.finetuned.json");
    let (code, out, _) = sublora(&["eval", ck.to_str().unwrap(), &cfg]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["rel_error"].as_f64().unwrap().is_finite());
    assert!(dir.path().join("out/cli-test.prune-sub_r-b3.model.json").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert_eq!(sublora(&["prune", &cfg, "--bogus"]).0, 1);
    assert_eq!(sublora(&["frobnicate"]).0, 1);
    assert_eq!(sublora(&["pretrain", "/nonexistent/config.json"]).0, 1);
    assert_eq!(sublora(&["prune", &cfg, "--method", "quadratic"]).0, 1);
    assert_eq!(sublora(&["--help"]).0, 0);
}

#[test]
fn budget_above_total_rank_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert_eq!(sublora(&["pretrain", &cfg]).0, 0);
    assert_eq!(sublora(&["finetune", &cfg]).0, 0);
    let (code, _, err) = sublora(&["prune", &cfg, "--budget", "99"]);
    assert_eq!(code, 1);
    assert!(err.contains("budget"), "{err}");
}
