use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gsabt::cli::RunConfig;
use gsabt::data::io::{load_series, Manifest};

fn gsabt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsabt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let data = dir.join("data");
    let cfg = dir.join("config.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 2\n[data]\nmanifest = {:?}\ntrain_weeks = 1\nval_weeks = 1\ntest_weeks = 1\n\
             [generate]\ndays = 21\n[model]\nd_h = 4\nd_f = 2\nst_layers = 1\ntop_u = 4\n\
             [train]\nepochs = 1\nwindow_stride = 32\nval_stride = 16\n",
            data.join("manifest.toml")
        ),
    )
    .unwrap();
    let out = gsabt(&["generate", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    cfg.to_string_lossy().into_owned()
}

#[test]
fn help_lists_every_config_key() {
    let out = gsabt(&["train", "--help"]);
    assert_eq!(code(&out), 0);
    let help = String::from_utf8(out.stdout).unwrap();
    let table: toml::Table = toml::from_str(&RunConfig::default().to_toml()).unwrap();
    let mut missing = Vec::new();
    for (section, v) in &table {
        match v.as_table() {
            Some(t) => {
                for key in t.keys() {
                    if !help.contains(&format!("{section}.{key}")) {
                        missing.push(format!("{section}.{key}"));
                    }
                }
            }
            None if !help.contains(section.as_str()) => missing.push(section.clone()),
            None => {}
        }
    }
    assert!(missing.is_empty(), "help omits {missing:?}");
    for cmd in ["generate", "train", "eval", "ablate", "sweep", "gradcheck", "census"] {
        assert_eq!(code(&gsabt(&[cmd, "--help"])), 0, "{cmd}");
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let o = out_dir.to_str().unwrap();
    assert_eq!(code(&gsabt(&[])), 2);
    assert_eq!(code(&gsabt(&["frobnicate"])), 2);
    assert_eq!(code(&gsabt(&["train", "--out", o, "--override", "model.bogus=1"])), 2);
    assert_eq!(code(&gsabt(&["train", "--out", o, "--override", "model.top_u=0"])), 2);
    assert_eq!(code(&gsabt(&["train", "--out", o, "--config", "/nonexistent/config.toml"])), 2);
    let missing_data = format!("data.manifest={:?}", dir.path().join("none.toml").to_str().unwrap());
    assert_eq!(code(&gsabt(&["train", "--out", o, "--override", &missing_data])), 2);
    let clash = gsabt(&["train", "--out", o, "--seed", "3", "--override", "train.seed=4"]);
    assert_eq!(code(&clash), 2);
}

#[test]
fn divergence_exits_3_and_gradcheck_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = dir.path().join("diverge");
    let out = gsabt(&[
        "train",
        "--config",
        &cfg,
        "--out",
        o.to_str().unwrap(),
        "--override",
        "train.optimizer=\"sgd\"",
        "--override",
        "train.learning_rate=1e300",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let g = dir.path().join("gc");
    let out = gsabt(&["gradcheck", "--out", g.to_str().unwrap(), "--override", "gradcheck.tol=1e-30"]);
    assert_eq!(code(&out), 4);
    let report = fs::read_to_string(g.join("gradcheck.txt")).unwrap();
    assert!(report.contains("FAIL"));
    assert!(g.join("run_manifest.toml").exists());
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, b"x").unwrap();
    let out = gsabt(&["gradcheck", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn generate_defaults_cover_thirteen_weeks_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&gsabt(&["generate", "--out", d.to_str().unwrap()])), 0);
    }
    let manifest = Manifest::read(&a.join("manifest.toml")).unwrap();
    let names: Vec<&str> = manifest.modalities.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["taxi", "bike"]);
    let nodes: Vec<usize> = manifest.modalities.iter().map(|m| m.node_count).collect();
    assert_eq!(nodes, [24, 16]);
    for m in &manifest.modalities {
        let s = load_series(&a.join(&m.series)).unwrap();
        assert_eq!(s.steps(), 91 * 48);
        assert_eq!(fs::read(a.join(&m.series)).unwrap(), fs::read(b.join(&m.series)).unwrap());
        assert_eq!(fs::read(a.join(&m.graph)).unwrap(), fs::read(b.join(&m.graph)).unwrap());
    }
    let other = dir.path().join("c");
    assert_eq!(code(&gsabt(&["generate", "--seed", "9", "--out", other.to_str().unwrap()])), 0);
    assert_ne!(fs::read(a.join("taxi.gstd")).unwrap(), fs::read(other.join("taxi.gstd")).unwrap());
}

#[test]
fn ablate_writes_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = dir.path().join("ablate");
    let out = gsabt(&["ablate", "--config", &cfg, "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(o.join("ablation.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "variant");
    assert!(header.iter().any(|h| h == "taxi_mae") && header.iter().any(|h| h == "bike_pcc"));
    let labels: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(labels, ["full", "no_sa", "no_agcn", "no_astar", "no_fstcn", "no_bstcn"]);
}

#[test]
fn train_eval_and_census_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let t = dir.path().join("train");
    assert_eq!(code(&gsabt(&["train", "--config", &cfg, "--out", t.to_str().unwrap()])), 0);
    for f in ["model.gsab", "history.csv", "report.csv", "baseline.csv", "run_manifest.toml"] {
        assert!(t.join(f).exists(), "{f}");
    }
    let ckpt = t.join("model.gsab");
    let e = dir.path().join("eval");
    let out = gsabt(&[
        "eval",
        "--config",
        &cfg,
        "--out",
        e.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(t.join("report.csv")).unwrap(), fs::read(e.join("report.csv")).unwrap());

    let c = dir.path().join("census");
    let args = ["census", "--config", &cfg, "--out", c.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()];
    assert_eq!(code(&gsabt(&args)), 0);
    let mut rdr = csv::Reader::from_path(c.join("census.csv")).unwrap();
    let mut sums = std::collections::BTreeMap::<String, f64>::new();
    for r in rdr.records() {
        let r = r.unwrap();
        *sums.entry(r[0].to_string()).or_default() += r[3].parse::<f64>().unwrap();
    }
    assert_eq!(sums.len(), 2);
    assert!(sums.values().all(|s| (s - 100.0).abs() < 0.1), "{sums:?}");

    let damaged = dir.path().join("bad.gsab");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&damaged, bytes).unwrap();
    let e2 = dir.path().join("eval2");
    let out = gsabt(&["eval", "--config", &cfg, "--out", e2.to_str().unwrap(), "--checkpoint", damaged.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}
