#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

pub fn cqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqr")).args(args).env("RUST_LOG", "warn").output().expect("spawn cqr")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Copy of the toy fixtures in a scratch directory.
pub struct Toy {
    pub dir: TempDir,
}

impl Toy {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for entry in fs::read_dir(fixture_dir()).unwrap() {
            let entry = entry.unwrap();
            if entry.file_type().unwrap().is_file() {
                fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
            }
        }
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn config(&self) -> String {
        self.path("cqr.toml").display().to_string()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }

    pub fn read_out(&self, name: &str) -> String {
        fs::read_to_string(self.out(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    /// Runs `cqr <sub> -c cqr.toml <extra..>`.
    pub fn run(&self, sub: &str, extra: &[&str]) -> Output {
        let config = self.config();
        let mut args = vec![sub, "-c", config.as_str()];
        args.extend_from_slice(extra);
        cqr(&args)
    }

    pub fn run_ok(&self, sub: &str, extra: &[&str]) -> String {
        let out = self.run(sub, extra);
        assert!(out.status.success(), "cqr {sub} {extra:?} failed:\n{}", stderr(&out));
        stdout(&out)
    }

    pub fn pipeline(&self) {
        for sub in ["index", "construct", "rewrite", "retrieve"] {
            self.run_ok(sub, &[]);
        }
    }

    pub fn edit_mock(&self, f: impl FnOnce(&mut serde_json::Value)) {
        let path = self.path("responses.json");
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        f(&mut v);
        fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    }

    pub fn qrels(&self) -> String {
        self.path("qrels.txt").display().to_string()
    }
}

/// `(qid, pid, rank, score)` rows of a six-column run file.
pub fn parse_run(text: &str) -> Vec<(String, String, usize, f64)> {
    text.lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 6, "bad run line `{l}`");
            assert_eq!(f[1], "Q0");
            (f[0].to_string(), f[2].to_string(), f[3].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}
