#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

pub fn esem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_esem"))
}

pub fn run(args: &[&str]) -> Output {
    esem().args(args).output().expect("spawn esem")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Key material generated by `esem keygen` in a temporary directory.
pub struct KeyDir {
    pub dir: tempfile::TempDir,
}

impl KeyDir {
    pub fn new(preset: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let k = KeyDir { dir };
        let out = run(&[
            "keygen",
            "--preset",
            preset,
            "--key",
            s(&k.key()),
            "--pubkey",
            s(&k.pubkey()),
            "--share-dir",
            s(&k.shares()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        k
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn key(&self) -> PathBuf {
        self.path("k.key")
    }

    pub fn pubkey(&self) -> PathBuf {
        self.path("k.pub")
    }

    pub fn shares(&self) -> PathBuf {
        self.path("shares")
    }

    pub fn party_dir(&self, j: u8) -> PathBuf {
        self.shares().join(format!("p{j}"))
    }

    /// Writes `message` and signs it into `<name>.sig`.
    pub fn sign(&self, name: &str, message: &[u8]) -> (PathBuf, PathBuf) {
        let m = self.path(&format!("{name}.msg"));
        let sig = self.path(&format!("{name}.sig"));
        std::fs::write(&m, message).unwrap();
        let out = run(&["sign", "--key", s(&self.key()), "--message", s(&m), "--out", s(&sig)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (m, sig)
    }

    pub fn verify_local(&self, m: &Path, sig: &Path) -> Output {
        run(&[
            "verify",
            "--pubkey",
            s(&self.pubkey()),
            "--sig",
            s(sig),
            "--message",
            s(m),
            "--local-shares",
            s(&self.shares()),
        ])
    }

    pub fn verify_remote(&self, m: &Path, sig: &Path, endpoints: &str) -> Output {
        run(&[
            "verify",
            "--pubkey",
            s(&self.pubkey()),
            "--sig",
            s(sig),
            "--message",
            s(m),
            "--endpoints",
            endpoints,
            "--timeout-ms",
            "2000",
        ])
    }
}

/// A `esem serve` child process, killed on drop.
pub struct ServerProc {
    pub child: Child,
    pub addr: String,
}

impl ServerProc {
    pub fn start(share_dir: &Path) -> Self {
        let mut child = esem()
            .args(["serve", "--listen", "127.0.0.1:0", "--share-dir", s(share_dir)])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .strip_prefix("listening on ")
            .and_then(|r| r.split_whitespace().next())
            .unwrap_or_else(|| panic!("unexpected server banner {line:?}"))
            .to_string();
        ServerProc { child, addr }
    }

    pub fn stop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServerProc {
    fn drop(&mut self) {
        self.stop();
    }
}
