//! Output files. Everything is written to a temporary sibling and renamed,
//! so a file that exists is complete.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use dflsim_core::simulator::RoundMetrics;

pub const PER_NODE_CSV: &str = "per_node.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const ADVERSARY_FILE: &str = "adversary.toml";
pub const SWEEP_CSV: &str = "sweep_summary.csv";
pub const GRAPH_FILE: &str = "graph.txt";
pub const REWIRE_FILE: &str = "rewire.txt";

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub fn per_node_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::from("round,node_id,role,accuracy,loss\n");
    for m in metrics {
        for n in &m.per_node {
            writeln!(out, "{},{},{},{:.6},{:.6}", m.round, n.id, n.role, n.accuracy, n.loss).unwrap();
        }
    }
    out
}

pub fn summary_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::from("round,honest_mean_accuracy\n");
    for m in metrics {
        writeln!(out, "{},{:.6}", m.round, m.honest_mean_accuracy).unwrap();
    }
    out
}
