use std::path::Path;
use std::process::{Command, Output};

fn amd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amd"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn run_writes_csvs_that_pass_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pd");
    let o = amd(&[
        "run",
        "--game",
        "pd",
        "--episodes",
        "200",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("p_all_c"));
    for f in ["seed_0.csv", "seed_1.csv", "summary.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let h = header(&out.join("seed_0.csv"));
    assert!(h.starts_with(
        "episode,planner_active,outcome,p_c_1,p_c_2,mean_p_c,p_all_c,welfare,rp_1,rp_2"
    ));
    assert!(h.ends_with("fear_1,greed_1,fear_2,greed_2"));

    let a = amd(&["audit", out.to_str().unwrap()]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("audit ok: 2 seeds"));
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = amd(&[
            "run",
            "--game",
            "chicken",
            "--mode",
            "estimated",
            "--episodes",
            "150",
            "--seeds",
            "2",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["seed_0.csv", "seed_1.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("res");
    std::fs::write(
        &cfg,
        format!(
            "game = staghunt\nepisodes = 30\nseeds = 3\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = amd(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("seed_0.csv").exists());
    assert!(!out.join("seed_1.csv").exists());
    let rows = std::fs::read_to_string(out.join("seed_0.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 31);
}

#[test]
fn bad_config_reports_line_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "game = pd\nlearning_rate = 3\n").unwrap();
    let o = amd(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(
        e.contains("bad.cfg") && e.contains('2') && e.contains("learning_rate"),
        "{e}"
    );
}

#[test]
fn audit_rejects_edited_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    assert!(amd(&[
        "run",
        "--episodes",
        "40",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let p = out.join("summary.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[2] = "9.0000000000000000e0".into();
    lines[1] = fields.join(",");
    std::fs::write(&p, lines.join("\n") + "\n").unwrap();
    let o = amd(&["audit", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("welfare"), "{}", stderr(&o));
}

#[test]
fn multiplayer_has_per_player_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = amd(&[
        "multiplayer",
        "--players",
        "4",
        "--episodes",
        "20",
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let h = header(&out.join("seed_0.csv"));
    assert!(
        h.contains("p_c_4") && h.contains("rp_4") && !h.contains("fear_1"),
        "{h}"
    );
}

#[test]
fn matrix_run_refuses_more_players() {
    let o = amd(&["run", "--players", "3", "--episodes", "5"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("multi-player"));
}

#[test]
fn gtft_and_coingame_write_per_round_files() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let o = amd(&[
        "gtft",
        "--seeds",
        "1",
        "--set",
        "gtft.rounds=25",
        "--set",
        "gtft.agents=gtft-bayes,always-d",
        "--out",
        g.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(g.join("gtft_seed_0.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 25);
    assert!(text.starts_with("match,agent_1,agent_2,round,action_1,action_2,alpha_1,alpha_2,beta_hat_1,beta_hat_2,reward_1,reward_2,welfare"));

    let c = dir.path().join("c");
    let o = amd(&[
        "coingame",
        "--seeds",
        "1",
        "--set",
        "coingame.episodes=20",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(c.join("coingame_seed_0.csv")).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.starts_with(
        "episode,total_reward,reward_red,reward_blue,own_color_frac_red,own_color_frac_blue"
    ));
}

#[test]
fn committed_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "cfg") {
            continue;
        }
        seen += 1;
        let tmp = tempfile::tempdir().unwrap();
        let name = path.file_name().unwrap().to_str().unwrap();
        let cmd = if name.starts_with("multiplayer") {
            "multiplayer"
        } else {
            "run"
        };
        let o = amd(&[
            cmd,
            "--config",
            path.to_str().unwrap(),
            "--episodes",
            "3",
            "--seeds",
            "1",
            "--out",
            tmp.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
    assert!(seen >= 17);
}
