use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DropReason, SampleResult, SampleStatus};
use crate::graph::difficulty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub hop: u32,
    pub samples: usize,
    /// Mean `|E_K|` over this hop's samples.
    pub mean_key_size: Option<f64>,
    /// Mean growth of `|E_K|` from the previous hop, over samples present
    /// at both.
    pub mean_increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSample {
    pub sample_id: String,
    pub hop: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input_samples: usize,
    pub max_hops: u32,
    pub seed: u64,
    pub pos_t1: usize,
    pub pos_t2: usize,
    pub dropped: usize,
    pub dropped_invalid_key: usize,
    pub dropped_no_valid_path: usize,
    pub extraction_failed: usize,
    pub expression_failed: usize,
    /// Samples that stopped before the last hop without being flagged.
    pub terminal: usize,
    pub flagged: usize,
    pub completed: usize,
    pub hops: Vec<HopStats>,
    pub flagged_samples: Vec<FlaggedSample>,
}

impl RunReport {
    pub fn build(results: &BTreeMap<String, SampleResult>, max_hops: u32, seed: u64) -> Self {
        let mut r = RunReport {
            input_samples: results.len(),
            max_hops,
            seed,
            pos_t1: 0,
            pos_t2: 0,
            dropped: 0,
            dropped_invalid_key: 0,
            dropped_no_valid_path: 0,
            extraction_failed: 0,
            expression_failed: 0,
            terminal: 0,
            flagged: 0,
            completed: 0,
            hops: Vec::new(),
            flagged_samples: Vec::new(),
        };
        for res in results.values() {
            match &res.status {
                SampleStatus::Dropped { reason, .. } => {
                    r.dropped += 1;
                    match reason {
                        DropReason::InvalidKeyGraph => r.dropped_invalid_key += 1,
                        DropReason::NoValidPath => r.dropped_no_valid_path += 1,
                        DropReason::ExtractionFailed => r.extraction_failed += 1,
                        DropReason::ExpressionFailed => r.expression_failed += 1,
                    }
                    continue;
                }
                SampleStatus::Completed => r.completed += 1,
                SampleStatus::Terminal { .. } => r.terminal += 1,
                SampleStatus::Flagged { hop, reason, .. } => {
                    r.flagged += 1;
                    r.flagged_samples.push(FlaggedSample {
                        sample_id: res.sample_id.clone(),
                        hop: *hop,
                        reason: reason.clone(),
                    });
                }
            }
            if res.reselected {
                r.pos_t2 += 1;
            } else {
                r.pos_t1 += 1;
            }
        }
        let mut sizes: BTreeMap<u32, HashMap<&str, usize>> = (0..=max_hops).map(|h| (h, HashMap::new())).collect();
        for res in results.values() {
            for rec in &res.records {
                sizes
                    .entry(rec.record.hop)
                    .or_default()
                    .insert(res.sample_id.as_str(), difficulty(&rec.record));
            }
        }
        for (&hop, at) in &sizes {
            let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            let prev = hop.checked_sub(1).and_then(|h| sizes.get(&h));
            let increment = prev.and_then(|prev| {
                mean(
                    at.iter()
                        .filter_map(|(id, &k)| prev.get(id).map(|&p| k as f64 - p as f64))
                        .collect(),
                )
            });
            r.hops.push(HopStats {
                hop,
                samples: at.len(),
                mean_key_size: mean(at.values().map(|&k| k as f64).collect()),
                mean_increment: increment,
            });
        }
        r
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input samples          {}", self.input_samples);
        let _ = writeln!(s, "answer is noun (T1)    {}", self.pos_t1);
        let _ = writeln!(s, "re-selected (T2)       {}", self.pos_t2);
        let _ = writeln!(s, "dropped                {}", self.dropped);
        let _ = writeln!(s, "  no visual key edge   {}", self.dropped_invalid_key);
        let _ = writeln!(s, "  no noun path         {}", self.dropped_no_valid_path);
        let _ = writeln!(s, "  extraction failed    {}", self.extraction_failed);
        let _ = writeln!(s, "  no question          {}", self.expression_failed);
        let _ = writeln!(s, "terminal before hop {}  {}", self.max_hops, self.terminal);
        let _ = writeln!(s, "flagged                {}", self.flagged);
        let _ = writeln!(s, "completed              {}", self.completed);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>4}  {:>8}  {:>10}  {:>10}", "hop", "samples", "mean |E_K|", "increment");
        for h in &self.hops {
            let size = h.mean_key_size.map_or("-".to_string(), |x| format!("{x:.2}"));
            let inc = h.mean_increment.map_or("-".to_string(), |x| format!("{x:+.2}"));
            let _ = writeln!(s, "{:>4}  {:>8}  {:>10}  {:>10}", h.hop, h.samples, size, inc);
        }
        if !self.flagged_samples.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "flagged samples:");
            for f in &self.flagged_samples {
                let _ = writeln!(s, "  {} (hop {}): {}", f.sample_id, f.hop, f.reason);
            }
        }
        s
    }
}
