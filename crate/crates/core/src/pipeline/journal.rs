//! Append-only record of finished samples, used to resume interrupted runs.
//!
//! The first line is a header carrying a fingerprint of the run settings;
//! each following line is one [`SampleResult`]. A torn final line (from a
//! kill mid-write) is cut off on open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{RunError, SampleResult};

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct Header {
    journal: u32,
    fingerprint: String,
}

pub struct Journal {
    path: PathBuf,
    fingerprint: String,
    file: Mutex<File>,
}

fn corrupt(path: &Path, line: usize, reason: impl std::fmt::Display) -> RunError {
    RunError::Journal(format!("{}:{line}: {reason}", path.display()))
}

impl Journal {
    /// Opens `path` for appending and returns the results already recorded.
    ///
    /// A journal written under a different fingerprint is an error unless
    /// `restart` is set, in which case it is discarded.
    pub fn open(
        path: &Path,
        fingerprint: &str,
        restart: bool,
    ) -> Result<(Journal, BTreeMap<String, SampleResult>), RunError> {
        let mut done = BTreeMap::new();
        let mut keep_bytes = 0u64;
        if path.exists() && !restart {
            let mut reader = BufReader::new(File::open(path)?);
            let mut line = String::new();
            let mut number = 0usize;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                number += 1;
                let complete = line.ends_with('\n');
                let text = line.trim_end();
                if number == 1 {
                    match serde_json::from_str::<Header>(text) {
                        Ok(h) if complete && h.fingerprint == fingerprint => {}
                        Ok(_) if complete => {
                            return Err(RunError::Journal(format!(
                                "{} was written with different input or settings; use a fresh output directory or --restart",
                                path.display()
                            )))
                        }
                        // A torn header: nothing useful was recorded.
                        _ => break,
                    }
                } else if !text.is_empty() {
                    match serde_json::from_str::<SampleResult>(text) {
                        Ok(r) if complete => {
                            done.insert(r.sample_id.clone(), r);
                        }
                        Ok(_) => break,
                        Err(e) => {
                            let at_end = reader.fill_buf()?.is_empty();
                            if at_end {
                                log::warn!("{}:{number}: dropping torn final line", path.display());
                                break;
                            }
                            return Err(corrupt(path, number, e));
                        }
                    }
                }
                keep_bytes += n as u64;
            }
        }
        let mut file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(path)?;
        file.set_len(keep_bytes)?;
        file.seek(SeekFrom::End(0))?;
        if keep_bytes == 0 {
            done.clear();
            let header = Header {
                journal: 1,
                fingerprint: fingerprint.to_string(),
            };
            writeln!(file, "{}", serde_json::to_string(&header).map_err(io::Error::other)?)?;
            file.flush()?;
        }
        let journal = Journal {
            path: path.to_path_buf(),
            fingerprint: fingerprint.to_string(),
            file: Mutex::new(file),
        };
        Ok((journal, done))
    }

    pub fn append(&self, result: &SampleResult) -> io::Result<()> {
        let mut line = serde_json::to_string(result).map_err(io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }

    /// Rewrites the journal with one line per sample, sorted by id.
    pub fn compact(&self, results: &BTreeMap<String, SampleResult>) -> io::Result<()> {
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut w = io::BufWriter::new(File::create(&tmp)?);
            let header = Header {
                journal: 1,
                fingerprint: self.fingerprint.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&header).map_err(io::Error::other)?)?;
            for r in results.values() {
                writeln!(w, "{}", serde_json::to_string(r).map_err(io::Error::other)?)?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, &self.path)?;
        *file = OpenOptions::new().append(true).open(&self.path)?;
        Ok(())
    }
}
