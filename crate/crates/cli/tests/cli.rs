use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anyhow::{Context, Result};
use serde_json::Value;

const MARKER: &str = "--- report ---";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirdesign"))
        .args(args)
        .current_dir(dir)
        .env_remove("DIRDESIGN_CACHE")
        .output()
        .expect("binary runs")
}

/// Exit code plus the parsed JSON block, which must agree with it.
fn report(out: &Output) -> Result<(i32, Value)> {
    let stdout = String::from_utf8(out.stdout.clone())?;
    let (_, json) = stdout.split_once(MARKER).context("no report marker")?;
    let v: Value = serde_json::from_str(json.trim())?;
    let code = out.status.code().context("killed")?;
    assert_eq!(v["exit_code"].as_i64(), Some(code as i64), "{stdout}");
    Ok((code, v))
}

#[test]
fn construct_then_verify_round_trip() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let (code, r) = report(&run(dir.path(), &["construct", "-v", "15"]))?;
    assert_eq!(code, 0);
    assert_eq!(r["data"]["blocks"], 42);
    let d: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("dd-v15.json"))?)?;
    assert_eq!(d["blocks"].as_array().map(Vec::len), Some(42));
    let (code, r) = report(&run(dir.path(), &["verify", "dd-v15.json", "--level", "all"]))?;
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"]["coverage"], true);
    assert_eq!(r["verdicts"]["super_simple"], true);
    Ok(())
}

#[test]
fn never_overwrites_without_force() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("out.json");
    fs::write(&path, "keep me")?;
    let (code, r) = report(&run(dir.path(), &["construct", "-v", "16", "--out", "out.json"]))?;
    assert_eq!(code, 3);
    assert!(r["error"].as_str().unwrap().contains("--force"));
    assert_eq!(fs::read_to_string(&path)?, "keep me");
    let (code, _) = report(&run(dir.path(), &["td", "--k", "5", "--n", "4", "--out", "out.json"]))?;
    assert_eq!(code, 3);
    assert_eq!(fs::read_to_string(&path)?, "keep me");
    let (code, _) = report(&run(dir.path(), &["construct", "-v", "16", "--out", "out.json", "--force"]))?;
    assert_eq!(code, 0);
    assert!(fs::read_to_string(&path)?.contains("\"v\": 16"));
    Ok(())
}

#[test]
fn inadmissible_and_gap_values_exit_2() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let out = run(dir.path(), &["construct", "-v", "17"]);
    let (code, r) = report(&out)?;
    assert_eq!(code, 2);
    assert!(r["error"].as_str().unwrap().contains("17 ≢ 0,1 (mod 5)"));
    let (code, r) = report(&run(dir.path(), &["construct", "-v", "170"]))?;
    assert_eq!(code, 2);
    assert!(r["error"].as_str().unwrap().contains("4^7 6^1"));
    assert!(!dir.path().join("dd-v17.json").exists());
    Ok(())
}

#[test]
fn tampered_file_fails_with_pair_listed() -> Result<()> {
    let dir = tempfile::tempdir()?;
    report(&run(dir.path(), &["construct", "-v", "15"]))?;
    let path = dir.path().join("dd-v15.json");
    let mut d: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    // Reversing two points of one block keeps it a valid block but moves
    // one ordered pair elsewhere.
    let b = d["blocks"][0].as_array_mut().unwrap();
    b.swap(0, 1);
    fs::write(&path, serde_json::to_string(&d)?)?;
    let out = run(dir.path(), &["verify", "dd-v15.json"]);
    let (code, r) = report(&out)?;
    assert_eq!(code, 1);
    assert_eq!(r["verdicts"]["coverage"], false);
    assert!(String::from_utf8(out.stdout)?.contains("pair ("));
    assert!(r["data"]["coverage_violations"]["pairs"].as_u64().unwrap() >= 2);
    Ok(())
}

#[test]
fn malformed_file_exits_3() -> Result<()> {
    let dir = tempfile::tempdir()?;
    fs::write(dir.path().join("bad.json"), "{\"v\": 3}")?;
    assert_eq!(report(&run(dir.path(), &["verify", "bad.json"]))?.0, 3);
    assert_eq!(report(&run(dir.path(), &["verify", "missing.json"]))?.0, 3);
    Ok(())
}

#[test]
fn trades_certificate_written() -> Result<()> {
    let dir = tempfile::tempdir()?;
    report(&run(dir.path(), &["catalog", "build", "dd-v25", "--out", "d25.json"]))?;
    let (code, r) = report(&run(dir.path(), &["trades", "d25.json", "--hints", "--out", "cert.json"]))?;
    assert_eq!(code, 0);
    assert!(r["data"]["lower_bound"].as_u64().unwrap() >= 60);
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cert.json"))?)?;
    assert_eq!(cert["blocks"], 120);
    assert_eq!(cert["success"], true);
    let (code, r) = report(&run(dir.path(), &["trades", "d25.json", "--no-hints", "--budget-seconds", "60"]))?;
    assert_eq!(code, 0);
    assert_eq!(r["data"]["hints"], false);
    Ok(())
}

#[test]
fn explain_leaves_are_constructible() -> Result<()> {
    let dir = tempfile::tempdir()?;
    assert_eq!(report(&run(dir.path(), &["construct", "-v", "96"]))?.0, 0);
    let (code, r) = report(&run(dir.path(), &["explain", "dd-v96.json"]))?;
    assert_eq!(code, 0);
    let leaves = r["data"]["leaves"].as_array().unwrap();
    assert!(!leaves.is_empty());
    for l in leaves {
        let l = l.as_str().unwrap();
        assert!(l.starts_with("catalog:") || l.starts_with("td:") || l.starts_with("search:"), "{l}");
    }
    Ok(())
}

#[test]
fn catalog_commands() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let (code, r) = report(&run(dir.path(), &["catalog", "list"]))?;
    assert_eq!(code, 0);
    let ids: Vec<&str> = r["data"]["entries"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"dd-v15") && ids.contains(&"dgdd-5^5"));
    let (code, r) = report(&run(dir.path(), &["catalog", "show", "dgdd-15^7"]))?;
    assert_eq!(code, 0);
    assert_eq!(r["data"]["blocks"], 1890);
    assert!(r["data"]["errata"].as_u64().unwrap() > 0);
    assert_eq!(report(&run(dir.path(), &["catalog", "checksum"]))?.0, 0);
    assert_eq!(report(&run(dir.path(), &["catalog", "show", "dd-v17"]))?.0, 3);
    Ok(())
}

#[test]
fn td_and_gdd_search() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let (code, r) = report(&run(dir.path(), &["td", "--k", "6", "--n", "5", "--out", "td.json"]))?;
    assert_eq!(code, 0);
    assert_eq!(r["data"]["blocks"], 25);
    assert_eq!(report(&run(dir.path(), &["td", "--k", "4", "--n", "6"]))?.0, 2);
    let (code, r) = report(&run(dir.path(), &["gdd-search", "--type", "3^8 7^1", "--K", "5", "--budget-seconds", "0"]))?;
    assert_eq!(code, 0);
    assert_eq!(r["data"]["blocks"], 42);
    let (code, _) = report(&run(dir.path(), &["gdd-search", "--type", "2^4", "--K", "4"]))?;
    assert_eq!(code, 2);
    let (code, _) = report(&run(dir.path(), &["gdd-search", "--type", "x^y", "--K", "4"]))?;
    assert_eq!(code, 3);
    Ok(())
}

#[test]
fn bad_flags_exit_3_before_work() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let out = run(dir.path(), &["construct"]);
    assert_eq!(out.status.code(), Some(3));
    let (code, _) = report(&run(dir.path(), &["construct", "-v", "15", "--budget-seconds=-1"]))?;
    assert_eq!(code, 3);
    assert!(!dir.path().join("dd-v15.json").exists());
    Ok(())
}
