//! Per-layer reports in CSV and plain-text form.

use std::fmt::Write;

use crate::perf::latency::LayerLatency;
use crate::perf::ledger::AccessLedger;

pub const CSV_HEADER: &str = "layer,kind,OPs,glb_act_r,glb_act_w,glb_param_r,glb_param_w,cache_act_r,cache_act_w,cache_param_r,cache_param_w,cycles,utilization";

/// One CSV row per layer. `latency` must come from the same ledger.
pub fn ledger_csv(ledger: &AccessLedger, latency: &[LayerLatency]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (l, t) in ledger.layers.iter().zip(latency) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.4}",
            l.index,
            l.kind,
            l.effective_ops(),
            l.glb_act.read,
            l.glb_act.write,
            l.glb_param.read,
            l.glb_param.write,
            l.cache_act.read,
            l.cache_act.write,
            l.cache_param.read,
            l.cache_param.write,
            t.cycles,
            t.utilization()
        );
    }
    s
}

fn kb(bytes: u64) -> f64 {
    bytes as f64 / 1000.0
}

/// Aligned table with sizes in KB (1 KB = 1000 bytes) and a totals row.
pub fn ledger_table(ledger: &AccessLedger, latency: &[LayerLatency]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>5} {:<7} {:>10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>6}",
        "layer", "kind", "OPs", "glbA r", "glbA w", "glbP r", "cacheA r", "cacheA w", "cacheP r", "cycles", "util"
    );
    for (l, t) in ledger.layers.iter().zip(latency) {
        let _ = writeln!(
            s,
            "{:>5} {:<7} {:>10} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9} {:>5.1}%",
            l.index,
            l.kind.to_string(),
            l.effective_ops(),
            kb(l.glb_act.read),
            kb(l.glb_act.write),
            kb(l.glb_param.read),
            kb(l.cache_act.read),
            kb(l.cache_act.write),
            kb(l.cache_param.read),
            t.cycles,
            100.0 * t.utilization()
        );
    }
    let cycles: u64 = latency.iter().map(|t| t.cycles).sum();
    let _ = writeln!(
        s,
        "{:>5} {:<7} {:>10} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9}",
        "total",
        "",
        ledger.effective_ops(),
        kb(ledger.glb_act().read),
        kb(ledger.glb_act().write),
        kb(ledger.glb_param().read),
        kb(ledger.cache_act().read),
        kb(ledger.cache_act().write),
        kb(ledger.cache_param().read),
        cycles
    );
    s
}
