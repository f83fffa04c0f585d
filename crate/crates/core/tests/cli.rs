use std::process::Command;

fn jpais(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_jpais")).args(args).output().unwrap()
}

#[test]
fn run_writes_csv_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = jpais(&[
        "run", "--users", "2", "--relays", "1", "--snr", "6,10", "--runs", "2", "--name", "smoke", "--out", out,
        "--plot",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("smoke.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algorithm,K,n_r,SNR,fdT,p_e,seed_block,ber,ber_ci95,mi,mi_unscaled,nt,adds,mults"
    );
    assert_eq!(lines.count(), 8);
    assert!(dir.path().join("smoke_ber_snr.svg").exists());
}

#[test]
fn same_seed_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = jpais(&[
            "feedback",
            "--users",
            "2",
            "--pe",
            "0,0.1",
            "--runs",
            "2",
            "--seed",
            "9",
            "--name",
            name,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn unknown_algorithm_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = jpais(&[
        "run",
        "--algorithms",
        "CIS,MAGIC",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("MAGIC"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn presets_print_as_config() {
    for preset in jpais::harness::PRESETS {
        let o = jpais(&["run", "--preset", preset, "--print-config"]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        jpais::harness::ExperimentSpec::from_toml(&text).unwrap();
    }
}

#[test]
fn complexity_table_lists_every_relay_count() {
    let o = jpais(&["complexity", "--relays", "1,2,3,4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("algorithm,K,N,L,n_r,adds,mults,mult_overhead_vs_CIS"));
    for nr in 1..=4 {
        assert!(text
            .lines()
            .any(|l| l.starts_with("JpaisGpc,") && l.split(',').nth(4) == Some(nr.to_string().as_str())));
    }
}

#[test]
fn plot_rejects_missing_file() {
    let o = jpais(&["plot", "/nonexistent/result.csv"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
