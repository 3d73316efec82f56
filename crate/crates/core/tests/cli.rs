use std::process::Command;

fn sdiar(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sdiar")).args(args).output().unwrap()
}

#[test]
fn simulate_diarize_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();
    std::fs::write(d.join("run.cfg"), "[bank]\ndirections = 36\ntaps = 64\n").unwrap();

    let out = sdiar(&["simulate", "--speakers", "2", "--duration", "12", "--seed", "3", "--out", &p("sim")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["meeting.wav", "meeting.rttm", "meeting.overlap.rttm", "meeting.vad.txt", "meeting.script"] {
        assert!(d.join("sim").join(f).exists(), "{f}");
    }
    let wav = p("sim/meeting.wav");
    let vad = p("sim/meeting.vad.txt");
    let out = sdiar(&["diarize", &wav, "--vad", &vad, "--config", &p("run.cfg"), "--out", &p("hyp.rttm"), "--report", &p("report.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "cluster_only");
    assert!(report["k"].as_u64().unwrap() >= 1);

    let out = sdiar(&["score-der", &p("sim/meeting.rttm"), &p("hyp.rttm")]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(keys, ["MISS", "FA", "SPKERR", "DER", "SCORED_TIME"]);

    let out = sdiar(&["score-osd", &p("sim/meeting.rttm"), &p("sim/meeting.overlap.rttm")]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("DETER=0.00"));
}

#[test]
fn exit_codes() {
    assert_eq!(sdiar(&["--help"]).status.code(), Some(0));
    assert_eq!(sdiar(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(sdiar(&["design"]).status.code(), Some(1));
    assert_eq!(sdiar(&["score-der", "/nonexistent/a.rttm", "/nonexistent/b.rttm"]).status.code(), Some(2));
}
