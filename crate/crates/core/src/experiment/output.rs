//! Plain comma-separated exports. Numbers use Rust's shortest round-trip
//! formatting, so files read back to identical `f64` values.

use std::fmt::Write;

use crate::diagnostics::corner_index;
use crate::ode::Trajectory;

use super::SweepRow;

/// `t,node,channel,value`, one row per entry per sample.
pub fn format_trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,node,channel,value\n");
    for (t, x) in traj.samples() {
        for (i, row) in x.rows().enumerate() {
            for (k, v) in row.iter().enumerate() {
                writeln!(s, "{t},{i},{k},{v}").expect("write to string");
            }
        }
    }
    s
}

/// `t,node,corner_index`, one row per node per sample.
pub fn format_clusters_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,node,corner_index\n");
    for (t, x) in traj.samples() {
        for (i, row) in x.rows().enumerate() {
            writeln!(s, "{t},{i},{}", corner_index(row)).expect("write to string");
        }
    }
    s
}

/// Sweep summary; `separation` is empty for unlabelled graphs.
pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut s =
        String::from("beta,final_dirichlet,cluster_count,separation,blow_up,max_abs,final_time\n");
    for r in rows {
        write!(s, "{},{},{},", r.beta, r.final_dirichlet, r.cluster_count)
            .expect("write to string");
        if let Some(sep) = r.separation {
            write!(s, "{sep}").expect("write to string");
        }
        writeln!(s, ",{},{},{}", r.blow_up, r.max_abs, r.final_time).expect("write to string");
    }
    s
}
