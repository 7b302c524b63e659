//! Post-run aggregation: per-chain mean flows, sum/difference series for a
//! designated hub and pair, propagation latency, and block intervals.
//! Warm-up ticks are excluded so genesis transients do not skew the means.

use std::collections::BTreeMap;
use std::fmt;

use crate::chain::TxId;
use crate::sim::config::FlowFocus;
use crate::sim::metrics::MetricsLog;
use crate::topology::BlockchainId;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChainSummary {
    /// Mean of bytes_out + bytes_in per tick, post-warm-up.
    pub mean_flow: f64,
    pub mean_bytes_out: f64,
    pub mean_bytes_in: f64,
    pub blocks_sealed: u64,
    pub mean_block_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusSummary {
    pub hub: BlockchainId,
    pub pair: (BlockchainId, BlockchainId),
    pub hub_mean_flow: f64,
    pub pair_sum_mean_flow: f64,
    /// |hub − (a+b)| / hub.
    pub relative_gap: f64,
    /// Mean of flow(a) − flow(b) per tick.
    pub diff_mean: f64,
    /// Least-squares slope of the difference series in bytes per tick².
    pub diff_slope: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencySummary {
    /// Transactions with at least one sealed copy.
    pub transactions: u64,
    pub mean_ticks: f64,
    pub max_ticks: u64,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub duration_ticks: u64,
    pub warmup_ticks: u64,
    pub per_chain: BTreeMap<BlockchainId, ChainSummary>,
    pub focus: Option<FocusSummary>,
    pub latency: LatencySummary,
    pub injected_total: u64,
    pub copies_sealed: u64,
    pub copies_double_confirmed: u64,
    pub exactly_once_violations: u64,
    pub sync_rejections: u64,
}

/// Aggregates a metrics log. `warmup_fraction` of the run is dropped from
/// flow statistics; latency uses injection records when present and falls
/// back to the origin-seal tick otherwise.
pub fn summarize(log: &MetricsLog, warmup_fraction: f64, focus: Option<FlowFocus>) -> Summary {
    let warmup_ticks = (log.duration_ticks as f64 * warmup_fraction).floor() as u64;

    // Per-chain flow series, post warm-up.
    let mut flow_sum: BTreeMap<BlockchainId, (u64, u64, u64)> = BTreeMap::new();
    for sample in &log.flows {
        if sample.tick < warmup_ticks {
            continue;
        }
        let entry = flow_sum.entry(sample.chain).or_insert((0, 0, 0));
        entry.0 += sample.bytes_out;
        entry.1 += sample.bytes_in;
        entry.2 += 1;
    }
    let mut per_chain: BTreeMap<BlockchainId, ChainSummary> = BTreeMap::new();
    for (chain, (out, inn, ticks)) in &flow_sum {
        let ticks = (*ticks).max(1) as f64;
        per_chain.insert(
            *chain,
            ChainSummary {
                mean_flow: (*out + *inn) as f64 / ticks,
                mean_bytes_out: *out as f64 / ticks,
                mean_bytes_in: *inn as f64 / ticks,
                ..ChainSummary::default()
            },
        );
    }
    for block in &log.blocks {
        let entry = per_chain.entry(block.chain).or_default();
        entry.blocks_sealed += 1;
        entry.mean_block_interval += block.interval_ticks as f64;
    }
    for summary in per_chain.values_mut() {
        if summary.blocks_sealed > 0 {
            summary.mean_block_interval /= summary.blocks_sealed as f64;
        }
    }

    let focus = focus.map(|f| focus_summary(log, warmup_ticks, f));

    // Latency: injection tick (when known) to last seal tick per transaction.
    let inject_ticks: BTreeMap<TxId, u64> = log
        .injections
        .iter()
        .map(|i| (i.tx_id, i.tick))
        .collect();
    let mut spans: BTreeMap<TxId, (u64, u64)> = BTreeMap::new();
    for event in &log.events {
        let entry = spans
            .entry(event.origin_tx_id)
            .or_insert((event.tick, event.tick));
        entry.0 = entry.0.min(event.tick);
        entry.1 = entry.1.max(event.tick);
    }
    let mut latency = LatencySummary::default();
    let mut total = 0u64;
    for (tx, (first_seal, last_seal)) in &spans {
        let start = inject_ticks.get(tx).copied().unwrap_or(*first_seal);
        let span = last_seal.saturating_sub(start);
        total += span;
        latency.max_ticks = latency.max_ticks.max(span);
        latency.transactions += 1;
    }
    if latency.transactions > 0 {
        latency.mean_ticks = total as f64 / latency.transactions as f64;
    }

    Summary {
        duration_ticks: log.duration_ticks,
        warmup_ticks,
        per_chain,
        focus,
        latency,
        injected_total: log.injected_total,
        copies_sealed: log.copies_sealed,
        copies_double_confirmed: log.copies_double_confirmed,
        exactly_once_violations: log.exactly_once_violations(),
        sync_rejections: log.sync_rejections,
    }
}

fn focus_summary(log: &MetricsLog, warmup_ticks: u64, focus: FlowFocus) -> FocusSummary {
    let mut series: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for sample in &log.flows {
        if sample.tick < warmup_ticks {
            continue;
        }
        let flow = (sample.bytes_out + sample.bytes_in) as f64;
        let entry = series.entry(sample.tick).or_insert((0.0, 0.0, 0.0));
        if sample.chain == focus.hub {
            entry.0 += flow;
        }
        if sample.chain == focus.pair.0 {
            entry.1 += flow;
        }
        if sample.chain == focus.pair.1 {
            entry.2 += flow;
        }
    }
    let n = series.len().max(1) as f64;
    let hub_mean = series.values().map(|v| v.0).sum::<f64>() / n;
    let sum_mean = series.values().map(|v| v.1 + v.2).sum::<f64>() / n;
    let diffs: Vec<(f64, f64)> = series
        .iter()
        .map(|(tick, v)| (*tick as f64, v.1 - v.2))
        .collect();
    let diff_mean = diffs.iter().map(|(_, d)| d).sum::<f64>() / n;
    // Least squares: slope = cov(t, d) / var(t).
    let t_mean = diffs.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (t, d) in &diffs {
        cov += (t - t_mean) * (d - diff_mean);
        var += (t - t_mean) * (t - t_mean);
    }
    let diff_slope = if var > 0.0 { cov / var } else { 0.0 };
    FocusSummary {
        hub: focus.hub,
        pair: focus.pair,
        hub_mean_flow: hub_mean,
        pair_sum_mean_flow: sum_mean,
        relative_gap: if hub_mean > 0.0 {
            (hub_mean - sum_mean).abs() / hub_mean
        } else {
            0.0
        },
        diff_mean,
        diff_slope,
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "run: {} ticks ({} warm-up), {} chains",
            self.duration_ticks,
            self.warmup_ticks,
            self.per_chain.len()
        )?;
        writeln!(
            f,
            "injected: {} txs; copies sealed: {} (double-confirmed {}); exactly-once violations: {}; rejected deltas: {}",
            self.injected_total,
            self.copies_sealed,
            self.copies_double_confirmed,
            self.exactly_once_violations,
            self.sync_rejections
        )?;
        for (chain, s) in &self.per_chain {
            writeln!(
                f,
                "chain {chain}: mean flow {:.1} B/tick (out {:.1}, in {:.1}); blocks {}, mean interval {:.2} ticks",
                s.mean_flow, s.mean_bytes_out, s.mean_bytes_in, s.blocks_sealed, s.mean_block_interval
            )?;
        }
        if let Some(focus) = &self.focus {
            writeln!(
                f,
                "hub {}: mean flow {:.1}; spokes {}+{} sum {:.1}; relative gap {:.4}",
                focus.hub, focus.hub_mean_flow, focus.pair.0, focus.pair.1, focus.pair_sum_mean_flow, focus.relative_gap
            )?;
            writeln!(
                f,
                "spoke difference {}-{}: mean {:.1} B/tick, slope {:.4} B/tick^2",
                focus.pair.0, focus.pair.1, focus.diff_mean, focus.diff_slope
            )?;
        }
        writeln!(
            f,
            "propagation latency: {} txs, mean {:.2} ticks, max {}",
            self.latency.transactions, self.latency.mean_ticks, self.latency.max_ticks
        )
    }
}
