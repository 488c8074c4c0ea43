use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gpsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpsched"))
        .args(args)
        .env_remove("GPSCHED_OUT_DIR")
        .env_remove("GPSCHED_SEED")
        .output()
        .expect("binary runs")
}

fn demo(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../demo")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn read(&self, name: &str) -> Vec<u8> {
        fs::read(self.path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    /// Synthesizes the demo track and learns from it into `models`.
    fn trained(self) -> Self {
        assert_ok(&gpsched(&[
            "synth",
            "--spec",
            &demo("routine.toml"),
            "--out-track",
            &self.p("track.csv"),
        ]));
        assert_ok(&gpsched(&[
            "learn",
            "--track",
            &self.p("track.csv"),
            "--out-dir",
            &self.p("models"),
        ]));
        self
    }
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_learn_replay_render() {
    let w = Work::new().trained();
    for name in ["locations.csv", "edges.csv", "schedule.csv", "sweep.csv"] {
        assert!(w.read(&format!("models/{name}")).len() > 40, "{name}");
    }
    let out = gpsched(&[
        "replay",
        "--track",
        &w.p("track.csv"),
        "--calendar",
        &demo("calendar.csv"),
        "--models-dir",
        &w.p("models"),
        "--out",
        &w.p("alerts.csv"),
    ]);
    assert_ok(&out);
    let alerts = String::from_utf8(w.read("alerts.csv")).unwrap();
    assert!(alerts.starts_with(
        "issued_at_iso8601,appointment_title,appointment_start,travel_seconds,slack_seconds\n"
    ));
    assert!(alerts.lines().count() > 1);

    let out = gpsched(&[
        "render",
        "--schedule",
        &w.p("models/schedule.csv"),
        "--svg",
        &w.p("chart.svg"),
        "--ascii",
        &w.p("chart.txt"),
        "--geojson",
        &w.p("map.geojson"),
        "--locations",
        &w.p("models/locations.csv"),
        "--track",
        &w.p("track.csv"),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8(w.read("chart.svg"))
        .unwrap()
        .contains("<svg"));
    assert!(String::from_utf8(w.read("chart.txt"))
        .unwrap()
        .contains("A = location 0"));
    let geo: serde_json::Value = serde_json::from_slice(&w.read("map.geojson")).unwrap();
    assert_eq!(geo["type"], "FeatureCollection");

    let out = gpsched(&[
        "render",
        "--schedule",
        &w.p("models/schedule.csv"),
        "--segment-minutes",
        "60",
    ]);
    assert_ok(&out);
    assert!(String::from_utf8(out.stdout).unwrap().contains("09:00"));
}

#[test]
fn documented_defaults_match_explicit_flags() {
    let w = Work::new().trained();
    let explicit = [
        "learn",
        "--track",
        &w.p("track.csv"),
        "--out-dir",
        &w.p("explicit"),
        "--gap-minutes",
        "10",
        "--speed-threshold",
        "1.0",
        "--radii",
        "50:1000:25",
        "--seed",
        "0",
    ];
    assert_ok(&gpsched(&explicit));
    for name in ["locations.csv", "edges.csv", "schedule.csv", "sweep.csv"] {
        assert_eq!(
            w.read(&format!("models/{name}")),
            w.read(&format!("explicit/{name}")),
            "{name}"
        );
    }

    let replay = |out: &str, extra: &[&str]| {
        let mut args = vec![
            "replay".to_string(),
            "--track".into(),
            w.p("track.csv"),
            "--calendar".into(),
            demo("calendar.csv"),
            "--models-dir".into(),
            w.p("models"),
            "--out".into(),
            w.p(out),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_ok(&gpsched(&args));
    };
    replay("default.csv", &[]);
    replay("explicit.csv", &["--tick", "15", "--lookahead", "7200"]);
    assert_eq!(w.read("default.csv"), w.read("explicit.csv"));

    let help = String::from_utf8(gpsched(&["learn", "--help"]).stdout).unwrap();
    for needle in [
        "[default: 10]",
        "[default: 1.0]",
        "[default: 50:1000:25]",
        "GPSCHED_SEED",
        "GPSCHED_OUT_DIR",
    ] {
        assert!(help.contains(needle), "learn --help lacks {needle}");
    }
    let help = String::from_utf8(gpsched(&["replay", "--help"]).stdout).unwrap();
    for needle in ["[default: 15]", "[default: 7200]"] {
        assert!(help.contains(needle), "replay --help lacks {needle}");
    }
}

#[test]
fn environment_and_config_set_defaults() {
    let w = Work::new().trained();
    let out = Command::new(env!("CARGO_BIN_EXE_gpsched"))
        .args(["learn", "--track", &w.p("track.csv")])
        .env("GPSCHED_OUT_DIR", w.p("from_env"))
        .env("GPSCHED_SEED", "0")
        .output()
        .unwrap();
    assert_ok(&out);
    assert_eq!(w.read("models/edges.csv"), w.read("from_env/edges.csv"));

    fs::write(
        w.path("gpsched.toml"),
        format!(
            "[learn]\nout_dir = {:?}\nradii = \"50:500:50\"\n",
            w.p("from_cfg")
        ),
    )
    .unwrap();
    assert_ok(&gpsched(&[
        "--config",
        &w.p("gpsched.toml"),
        "learn",
        "--track",
        &w.p("track.csv"),
    ]));
    let sweep = String::from_utf8(w.read("from_cfg/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 10);

    // A flag beats the config file.
    assert_ok(&gpsched(&[
        "learn",
        "--config",
        &w.p("gpsched.toml"),
        "--track",
        &w.p("track.csv"),
        "--radii",
        "50:250:50",
    ]));
    let sweep = String::from_utf8(w.read("from_cfg/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 5);

    fs::write(w.path("bad.toml"), "[learn]\nradius = 3\n").unwrap();
    let out = gpsched(&[
        "--config",
        &w.p("bad.toml"),
        "learn",
        "--track",
        &w.p("track.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let w = Work::new();
    assert_eq!(gpsched(&["learn"]).status.code(), Some(1));
    assert_eq!(gpsched(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gpsched(&["--help"]).status.code(), Some(0));

    fs::write(
        w.path("bad.csv"),
        "timestamp,lat,lon,speed_mph\n2004-05-14T18:04:32Z,95.0,-84.0,3.0\n",
    )
    .unwrap();
    let out = gpsched(&["learn", "--track", &w.p("bad.csv"), "--out-dir", &w.p("m")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("latitude out of range, line 2"));

    let out = gpsched(&["learn", "--track", &w.p("missing.csv")]);
    assert_eq!(out.status.code(), Some(2));

    let w = w.trained();
    let out = gpsched(&["learn", "--track", &w.p("track.csv"), "--radii", "100:50:5"]);
    assert_eq!(out.status.code(), Some(1));

    // Locations but no edges: replay cannot estimate travel.
    fs::create_dir(w.path("untrained")).unwrap();
    fs::copy(
        w.path("models/locations.csv"),
        w.path("untrained/locations.csv"),
    )
    .unwrap();
    fs::write(
        w.path("untrained/edges.csv"),
        "from_id,to_id,mean_seconds,n_samples,mean_speed_mph\n",
    )
    .unwrap();
    let out = gpsched(&[
        "replay",
        "--track",
        &w.p("track.csv"),
        "--calendar",
        &demo("calendar.csv"),
        "--models-dir",
        &w.p("untrained"),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn ingest_nmea_and_csv() {
    let w = Work::new();
    let out = gpsched(&[
        "ingest",
        "--input",
        &data("golden.nmea"),
        "--out",
        &w.p("golden.csv"),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("fixes: 38, skipped: 10"));
    assert_eq!(
        w.read("golden.csv"),
        fs::read(data("golden_expected.csv")).unwrap()
    );

    let out = gpsched(&[
        "ingest",
        "--input",
        &w.p("golden.csv"),
        "--format",
        "csv",
        "--out",
        &w.p("again.csv"),
    ]);
    assert_ok(&out);
    assert_eq!(w.read("golden.csv"), w.read("again.csv"));

    fs::write(
        w.path("empty.nmea"),
        "$GPRMC,180400.000,V,3346.5360,N,08423.7780,W,11.0,54.7,140504,,,*22\n",
    )
    .unwrap();
    let out = gpsched(&[
        "ingest",
        "--input",
        &w.p("empty.nmea"),
        "--out",
        &w.p("x.csv"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
