use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use rheocast_cli::config::Config;

const TINY: &str = "[campaign]\nn_concretes = 10\nruns_per_concrete = 2\nframes_per_run = 24\nimplausible = 4\n\
                    [train]\nepochs = 1\n";

fn rheocast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rheocast"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&rheocast(&["frobnicate"])), 2);
    assert_eq!(code(&rheocast(&["train"])), 2);
    assert_eq!(code(&rheocast(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    let out = rheocast(&["-c", &s(&cfg), "generate", "-o", &s(&dir.path().join("d"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = rheocast(&["-c", &s(&dir.path().join("nope.cfg")), "generate", "-o", &s(dir.path())]);
    assert_eq!(code(&out), 3);
    let out = rheocast(&["evaluate", "--data", &s(&dir.path().join("missing")), "--dry-run"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn pipeline_on_a_tiny_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let (cfg, data, ck, ev, sw) = (
        s(&cfg),
        s(&dir.path().join("data")),
        s(&dir.path().join("ck")),
        s(&dir.path().join("eval")),
        s(&dir.path().join("sweep")),
    );

    let out = rheocast(&["-c", &cfg, "generate", "-o", &data]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("digest"));
    assert_eq!(code(&rheocast(&["-c", &cfg, "generate", "-o", &data])), 2, "refuses to overwrite");

    assert_eq!(code(&rheocast(&["-c", &cfg, "evaluate", "--data", &data, "--dry-run"])), 0);
    assert_eq!(code(&rheocast(&["-c", &cfg, "train", "--data", &data, "-o", &ck, "--fold", "9"])), 2);
    assert_eq!(
        code(&rheocast(&["-c", &cfg, "train", "--data", &data, "-o", &ck, "--combination", "X+Y"])),
        2
    );

    let out = rheocast(&["-c", &cfg, "train", "--data", &data, "-o", &ck, "--fold", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fold = Path::new(&ck).join("D+m+OF/fold_0");
    for f in ["model.rhc", "norm.txt", "epochs.csv", "meta.txt"] {
        assert!(fold.join(f).is_file(), "{f}");
    }

    let out = rheocast(&["-c", &cfg, "evaluate", "--data", &data, "--checkpoints", &ck, "-o", &ev]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(Path::new(&ev).join("metrics.csv")).unwrap();
    assert!(metrics.lines().count() > 1);
    assert!(Path::new(&ev).join("averaging.csv").is_file());

    let fold_dir = s(&fold);
    let sweep = |from: &str, to: &str| {
        rheocast(&[
            "-c", &cfg, "sweep", "--data", &data, "--checkpoint", &fold_dir, "--concrete", "0", "--run", "0",
            "--from", from, "--to", to, "-o", &sw, "--svg",
        ])
    };
    // Concrete 0 may sit in the training split; the sweep works on any run.
    let out = sweep("0", "60");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(Path::new(&sw).join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 62);
    assert!(Path::new(&sw).join("sweep.svg").is_file());
    assert_eq!(code(&sweep("30", "10")), 2);

    // A damaged checkpoint is a file-format error.
    let model = fold.join("model.rhc");
    let bytes = std::fs::read(&model).unwrap();
    std::fs::write(&model, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&sweep("0", "60")), 3);
}

fn configs() -> impl Strategy<Value = String> {
    (
        1usize..20,
        1usize..64,
        any::<u64>(),
        prop::sample::select(vec!["O+D", "D+m+OF", "O+D+m+OF", "O+m"]),
        prop::sample::select(vec!["auto", "desk64", "paper"]),
        1e-4..1e-1f64,
        prop::collection::btree_set(0usize..30, 0..3),
        prop::sample::subsequence(vec!["none", "per_run", "all_runs", "per_reference"], 1..=4),
    )
        .prop_map(|(epochs, batch, seed, comb, model, lr, implausible, groupings)| {
            let imp: Vec<String> = implausible.iter().map(|i| i.to_string()).collect();
            format!(
                "# generated\n[model]\npreset = {model}\n[train]\nepochs = {epochs}\nbatch_size = {}\n\
                 seed = {seed}\nlearning_rate = {lr}\n[data]\ncombination = {comb}\n\
                 [campaign]\nn_concretes = 30\nimplausible = {}\n[eval]\ngroupings = {}\n",
                batch + 1,
                imp.join(","),
                groupings.join(",")
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_config_round_trips(text in configs()) {
        let cfg = Config::parse(&text).unwrap();
        let again = Config::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_text(), cfg.to_text());
    }
}
