//! `key = value` run files that mirror command-line flags.
//!
//! ```text
//! # comments and blank lines are ignored
//! metric = w1
//! groups = features*rows:day
//! inject = location_case_bug@1
//! exact = true
//! ```
//!
//! Each key becomes `--key value` (or just `--key` for `true`), inserted
//! before the flags given on the command line so the latter win.

use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn parse(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", n + 1);
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            bail!("config line {}: bad key `{key}`", n + 1);
        }
        let value = value.trim();
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

pub fn load(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text)
}

/// Finds `--config PATH` / `--config=PATH` among the global flags, i.e.
/// before the subcommand.
pub fn locate(argv: &[String], subcommands: &[&str]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if subcommands.contains(&a.as_str()) {
            return None;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Inserts `extra` right after the subcommand name.
pub fn splice(argv: &[String], subcommands: &[&str], extra: Vec<String>) -> Vec<String> {
    match argv.iter().position(|a| subcommands.contains(&a.as_str())) {
        Some(i) => {
            let mut out = argv[..=i].to_vec();
            out.extend(extra);
            out.extend_from_slice(&argv[i + 1..]);
            out
        }
        None => argv.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_pairs_and_flags() {
        let args = parse("# run\nmetric = w1\n\nexact = true\nquiet=false\ngroups=features*rows:day\n").unwrap();
        assert_eq!(args, s(&["--metric", "w1", "--exact", "--groups", "features*rows:day"]));
        assert!(parse("metric w1").is_err());
        assert!(parse("= w1").is_err());
    }

    #[test]
    fn locate_and_splice() {
        let subs = ["drift", "attribute"];
        let argv = s(&["gd", "--threads", "2", "--config", "run.cfg", "drift", "--metric", "evd"]);
        assert_eq!(locate(&argv, &subs).as_deref(), Some("run.cfg"));
        let argv2 = s(&["gd", "drift", "--config", "x"]);
        assert_eq!(locate(&argv2, &subs), None);
        let spliced = splice(&argv, &subs, s(&["--metric", "w1"]));
        assert_eq!(
            spliced,
            s(&["gd", "--threads", "2", "--config", "run.cfg", "drift", "--metric", "w1", "--metric", "evd"])
        );
    }
}
