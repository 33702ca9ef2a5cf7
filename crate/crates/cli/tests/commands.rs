use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use factorscope_core::io::read_factor_returns;

const SMALL: &str = "[synthetic]\nn_stocks = 30\nn_days = 60\nn_portfolios = 12\nspan_max = 50\n";

fn factorscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factorscope"))
        .args(args)
        .env_remove("FACTORSCOPE_PORT")
        .env_remove("FACTORSCOPE_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn synth(dir: &Path, config_body: &str, out: &str) -> PathBuf {
    let cfg = write_config(dir, "synth.toml", config_body);
    let out = dir.join(out);
    let o = factorscope(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_writes_the_bundle_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path(), SMALL, "a");
    let b = synth(tmp.path(), SMALL, "b");
    let names: Vec<String> = snapshot(&a).into_iter().map(|f| f.0).collect();
    for f in ["panel_exposures.csv", "panel_market.csv", "sectors.csv", "portfolios.jsonl", "planted-truth.json", "run-config.json"] {
        assert!(names.iter().any(|n| n == f), "missing {f}");
    }
    for ((na, ba), (_, bb)) in snapshot(&a).iter().zip(snapshot(&b)) {
        if na != "run-config.json" {
            assert!(*ba == bb, "{na} differs");
        }
    }

    // Replaying the persisted run config reproduces every output.
    let c = tmp.path().join("c");
    let o = factorscope(&["synth", "--config", p(&a.join("run-config.json")), "--out", p(&c)]);
    assert!(o.status.success());
    for ((na, ba), (_, bc)) in snapshot(&a).iter().zip(snapshot(&c)) {
        if na != "run-config.json" {
            assert!(*ba == bc, "{na} differs on replay");
        }
    }
}

#[test]
fn invalid_synth_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[synthetic]\nn_stocks = 0\n");
    let o = factorscope(&["synth", "--config", p(&cfg), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_stocks"));

    let cfg = write_config(tmp.path(), "typo.toml", "[synthetic]\nn_stock = 10\n");
    let o = factorscope(&["synth", "--config", p(&cfg), "--out", p(&tmp.path().join("y"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn factors_recover_planted_returns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), &format!("{SMALL}residual_vol = 0.0\n"), "data");
    let before = snapshot(&data);
    let out = tmp.path().join("factors");
    let o = factorscope(&["factors", "--data", p(&data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(snapshot(&data), before, "input directory changed");

    let est = read_factor_returns(&out.join("factor_returns.csv")).unwrap();
    let truth: serde_json::Value = serde_json::from_slice(&std::fs::read(data.join("planted-truth.json")).unwrap()).unwrap();
    let days: Vec<&str> = truth["days"].as_array().unwrap().iter().map(|d| d.as_str().unwrap()).collect();
    for (i, day) in est.days.iter().enumerate() {
        let t = days.iter().position(|d| *d == day.to_string()).unwrap();
        for s in 0..10 {
            let planted = truth["factor_returns"][t][s].as_f64().unwrap();
            assert!((est.returns[[i, s]] - planted).abs() < 1e-10, "day {day} factor {s}");
        }
    }
    let corr: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("correlations.json")).unwrap()).unwrap();
    assert_eq!(corr["window"], 20);
    assert_eq!(corr["rolling"].as_object().unwrap().len(), 45);
    assert!(out.join("residuals.csv").exists());
}

#[test]
fn constant_factor_names_the_day() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), SMALL, "data");
    let path = data.join("panel_exposures.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut edited = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut cols: Vec<&str> = line.split(',').collect();
        if cols[0] == "2016-01-06" {
            cols[4] = "1.0";
        }
        edited.push_str(&cols.join(","));
        edited.push('\n');
    }
    std::fs::write(&path, edited).unwrap();
    let o = factorscope(&["factors", "--data", p(&data), "--out", p(&tmp.path().join("f"))]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("2016-01-06"), "{err}");
}

#[test]
fn output_may_not_overwrite_input() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), SMALL, "data");
    let before = snapshot(&data);
    let o = factorscope(&["factors", "--data", p(&data), "--out", p(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(snapshot(&data), before);
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), SMALL, "data");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = factorscope(&["train", "--data", p(&data), "--out", p(&out), "--seed", "7", "--epochs", "3", "--hidden", "6"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("m1"), run("m2"));
    assert_eq!(std::fs::read(a.join("model.json")).unwrap(), std::fs::read(b.join("model.json")).unwrap());
    let loss = std::fs::read_to_string(a.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
}

#[test]
fn report_writes_summaries_and_guards_empty_periods() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), SMALL, "data");
    let out = tmp.path().join("report");
    let o = factorscope(&["report", "--data", p(&data), "--out", p(&out), "--start", "2016-01-11", "--end", "2016-02-26", "--top", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let html = std::fs::read_to_string(out.join("report.html")).unwrap();
    assert!(html.contains("Period 2016-01-11 to 2016-02-26") && html.contains("CSI300"));
    assert_eq!(std::fs::read_to_string(out.join("top_portfolios.csv")).unwrap().lines().count(), 6);
    assert_eq!(std::fs::read_to_string(out.join("correlations.csv")).unwrap().lines().count(), 11);

    for (start, end) in [("2016-01-09", "2016-01-10"), ("2016-02-10", "2016-02-01"), ("2030-01-01", "2030-02-01")] {
        let o = factorscope(&["report", "--data", p(&data), "--out", p(&out), "--start", start, "--end", end]);
        assert_eq!(o.status.code(), Some(2), "{start}..{end}");
    }
}

fn http_get(port: u16, path: &str) -> Option<(u16, String)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    let status = response.split_whitespace().nth(1)?.parse().ok()?;
    let body = response.split_once("\r\n\r\n").map(|x| x.1.to_string()).unwrap_or_default();
    Some((status, body))
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_answers_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), SMALL, "data");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let _child = Child(
        Command::new(env!("CARGO_BIN_EXE_factorscope"))
            .args(["serve", "--data", p(&data), "--port", &port.to_string()])
            .args(["--epochs", "2", "--hidden", "4", "--perplexity", "3"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let deadline = Instant::now() + Duration::from_secs(120);
    let mut last = None;
    while Instant::now() < deadline {
        match http_get(port, "/api/clusters") {
            Some((200, body)) => {
                assert!(body.contains("\"points\""));
                return;
            }
            other => last = other.map(|o| o.0),
        }
        std::thread::sleep(Duration::from_millis(200));
    }
    panic!("no 200 from /api/clusters, last status {last:?}");
}
