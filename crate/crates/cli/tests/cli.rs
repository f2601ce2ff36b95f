use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vpvn_core::crypto::KeyFile;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

fn vpvn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpvn")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn run_sample_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let sample = fixture("sample_network.toml");
    let out = vpvn(&["run", sample.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 5);
    let logs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "log"))
        .count();
    assert_eq!(logs, 5);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(report.matches("# verdict ACCEPT").count(), 5);
}

#[test]
fn run_is_deterministic() {
    let sample = fixture("sample_network.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = vpvn(&["run", sample.to_str().unwrap(), "--seed", "77", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&out), 0);
    }
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn run_without_kdc_is_an_input_error() {
    let text = fs::read_to_string(fixture("sample_network.toml")).unwrap();
    let broken = text.replace("role = \"kdc\"", "role = \"point\"");
    assert_ne!(broken, text);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, broken).unwrap();
    let out = vpvn(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&vpvn(&["run", "/nonexistent/scenario.toml"])), 2);
}

#[test]
fn enet_reach_builtin() {
    let out = vpvn(&["enet", "reach", "envpvn"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "13");
}

#[test]
fn enet_reach_fixture_file() {
    let net = fixture("nets/envpvn.toml");
    let out = vpvn(&["enet", "reach", net.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "13");
}

#[test]
fn enet_run_scripted() {
    let out = vpvn(&["enet", "run", "envpvn", "--resolver", "ok,nokey,nokey,end"]);
    assert_eq!(code(&out), 0);
    let trace = stdout(&out);
    let fired: Vec<_> = trace.lines().map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(fired, ["t1", "t2", "t3", "t5", "t6", "t7", "t8", "t9", "t10", "t11", "t12"]);
}

#[test]
fn enet_run_short_script_is_rejected() {
    let out = vpvn(&["enet", "run", "envpvn", "--resolver", "ok"]);
    assert_eq!(code(&out), 2);
    let out = vpvn(&["enet", "run", "envpvn", "--resolver", "ok,banana"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn enet_run_token_driven() {
    let out = vpvn(&["enet", "run", "envpvn", "--frames", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 17);
}

#[test]
fn malformed_net_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "positions = 7\n").unwrap();
    assert_eq!(code(&vpvn(&["enet", "reach", path.to_str().unwrap()])), 2);
}

#[test]
fn conform_fixtures() {
    let ok = vpvn(&["conform", fixture("logs/happy_one_frame.log").to_str().unwrap()]);
    assert_eq!(code(&ok), 0);
    assert_eq!(stdout(&ok).trim(), "ACCEPT");

    let swapped = vpvn(&["conform", fixture("logs/swapped_send_receive.log").to_str().unwrap()]);
    assert_eq!(code(&swapped), 1);
    assert!(stdout(&swapped).starts_with("REJECT"));

    let rejected = vpvn(&["conform", fixture("logs/rejected.log").to_str().unwrap()]);
    assert_eq!(code(&rejected), 0);
}

#[test]
fn conform_empty_log_as_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.log");
    fs::write(&path, "").unwrap();
    assert_eq!(code(&vpvn(&["conform", "--prefix", path.to_str().unwrap()])), 0);
}

#[test]
fn conform_garbage_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.log");
    fs::write(&path, "this is not an event\n").unwrap();
    assert_eq!(code(&vpvn(&["conform", path.to_str().unwrap()])), 2);
}

#[test]
fn keygen_seeded_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = vpvn(&["keygen", "--seed", "9", "--out", d.path().to_str().unwrap(), "--name", "k"]);
        assert_eq!(code(&out), 0);
    }
    for f in ["k.key", "k.pub"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let KeyFile::Private(pair) = KeyFile::decode(&fs::read(a.path().join("k.key")).unwrap()).unwrap() else {
        panic!("expected a private key file")
    };
    let KeyFile::Public(public) = KeyFile::decode(&fs::read(a.path().join("k.pub")).unwrap()).unwrap() else {
        panic!("expected a public key file")
    };
    assert_eq!(pair.public(), &public);
}

#[test]
fn keygen_into_missing_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(code(&vpvn(&["keygen", "--out", missing.to_str().unwrap()])), 1);
}
