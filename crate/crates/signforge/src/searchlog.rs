//! Policy-search log: one reward record per line, appended as the search runs.

use std::io::Write;
use std::path::Path;

use signforge_core::policy_search::RewardRecord;
use signforge_core::transforms::Policy;

use crate::error::{Error, Result};

pub const SEARCH_LOG_HEADER: &str = "signforge-search-log v1";

pub fn record_line(r: &RewardRecord) -> String {
    format!("{}\t{}\t{}\t{}", r.epoch, r.reward, r.diverged, r.policy.to_line())
}

pub fn parse_log(text: &str, path: &Path) -> Result<Vec<RewardRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SEARCH_LOG_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: SEARCH_LOG_HEADER.into(),
                found: h.into(),
            })
        }
        None => return Err(Error::parse(path, 1, "empty search log")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::parse(path, i as u64 + 1, m);
        let mut parts = line.splitn(4, '\t');
        let (Some(epoch), Some(reward), Some(diverged), Some(policy)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected 4 tab-separated fields"));
        };
        out.push(RewardRecord {
            epoch: epoch.parse().map_err(|_| bad("bad epoch"))?,
            reward: reward.parse().map_err(|_| bad("bad reward"))?,
            diverged: diverged.parse().map_err(|_| bad("bad diverged flag"))?,
            policy: Policy::from_line(policy).map_err(|e| bad(&e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<RewardRecord>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_log(&text, path)
}

/// Appends records to a log file, flushing after every line so an
/// interrupted search leaves a valid prefix behind.
pub struct LogWriter {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl LogWriter {
    /// Creates (truncating) the log and writes `existing` back first.
    pub fn create(path: &Path, existing: &[RewardRecord]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        let file = std::fs::File::create(path).map_err(Error::io(path))?;
        let mut w = Self { file, path: path.to_path_buf() };
        writeln!(w.file, "{SEARCH_LOG_HEADER}").map_err(Error::io(path))?;
        for r in existing {
            w.append(r)?;
        }
        Ok(w)
    }

    pub fn append(&mut self, r: &RewardRecord) -> Result<()> {
        writeln!(self.file, "{}", record_line(r)).map_err(Error::io(&self.path))?;
        self.file.flush().map_err(Error::io(&self.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.tsv");
        let recs = vec![
            RewardRecord { policy: Policy::identity(), reward: 0.1 + 0.2, epoch: 0, diverged: false },
            RewardRecord { policy: Policy::identity(), reward: 0.0, epoch: 1, diverged: true },
        ];
        let mut w = LogWriter::create(&path, &recs[..1]).unwrap();
        w.append(&recs[1]).unwrap();
        assert_eq!(read_log(&path).unwrap(), recs);
    }

    #[test]
    fn rejects_malformed() {
        let p = Path::new("x");
        assert!(matches!(parse_log("other v9\n", p), Err(Error::Version { .. })));
        assert!(matches!(
            parse_log(&format!("{SEARCH_LOG_HEADER}\n0\tnan?\tfalse\tx\n"), p),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
