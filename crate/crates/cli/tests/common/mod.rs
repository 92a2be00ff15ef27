#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn ksae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksae"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("failed to launch ksae")
}

/// Runs `ksae` and panics with its stderr unless it exits with `code`.
pub fn ksae_expect(code: i32, args: &[&str]) -> String {
    let out = ksae(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "ksae {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn ok(args: &[&str]) -> String {
    ksae_expect(0, args)
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `key=value` lines of command output.
pub fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{stdout}"))
}

pub fn csv_rows(file: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(file)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
