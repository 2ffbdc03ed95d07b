use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{pass_at_k, MetricsError, PassAtKInput};
use crate::orchestrator::{MethodName, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub task_id: String,
    pub model_id: String,
    pub method: MethodName,
}

/// One (task, model, method) row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub task_id: String,
    pub model_id: String,
    pub method: MethodName,
    /// Valid (non-errored) runs; this is n_t for pass@1.
    pub runs: u32,
    pub errored_runs: u32,
    pub compile_passes: u32,
    pub func_passes: u32,
    pub mean_crystal_bleu: f64,
    pub pass_at_1_comp: f64,
    pub pass_at_1_func: f64,
    pub total_iterations: u64,
    pub wrong_format_iterations: u64,
    pub repetition_iterations: u64,
    pub wrong_format_rate: f64,
    pub repetition_rate: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Sorted by cell key.
    pub rows: Vec<CellRow>,
    pub errored_runs: u32,
}

/// Group records by cell and reduce each cell.
///
/// Errored runs are counted but contribute nothing else; a cell made only of
/// errored runs produces no row. Within a cell, records are reduced in
/// `repeat_index` order so the result does not depend on input order.
pub fn aggregate(records: &[RunRecord]) -> Result<AggregateReport, MetricsError> {
    let mut cells: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = CellKey { task_id: r.task_id.clone(), model_id: r.model_id.clone(), method: r.method };
        cells.entry(key).or_default().push(r);
    }

    let mut report = AggregateReport::default();
    for (key, mut group) in cells {
        let mut totals: Vec<u32> = group.iter().map(|r| r.repeat_total).collect();
        totals.sort_unstable();
        totals.dedup();
        if totals.len() > 1 {
            return Err(MetricsError::MixedRepeatTotals {
                cell: format!("{}/{}/{}", key.task_id, key.model_id, key.method),
                totals,
            });
        }

        group.sort_by(|a, b| a.repeat_index.cmp(&b.repeat_index).then(a.crystal_bleu.total_cmp(&b.crystal_bleu)));
        let errored = group.iter().filter(|r| r.is_errored()).count() as u32;
        report.errored_runs += errored;
        let valid: Vec<&RunRecord> = group.into_iter().filter(|r| !r.is_errored()).collect();
        if valid.is_empty() {
            log::warn!("cell {}/{}/{} has no valid runs", key.task_id, key.model_id, key.method);
            continue;
        }
        if errored > 0 {
            log::warn!("cell {}/{}/{}: {errored} errored run(s) excluded", key.task_id, key.model_id, key.method);
        }

        let n_t = valid.len() as u64;
        let compile_passes = valid.iter().filter(|r| r.compiled()).count() as u64;
        let func_passes = valid.iter().filter(|r| r.func_passed()).count() as u64;
        let bleu_sum: f64 = valid.iter().map(|r| r.crystal_bleu).sum();
        let its = valid.iter().flat_map(|r| &r.iterations);
        let (mut total_it, mut wf_it, mut rep_it) = (0u64, 0u64, 0u64);
        for it in its {
            total_it += 1;
            wf_it += it.extraction.is_wrong_format() as u64;
            rep_it += it.repetition_flag as u64;
        }
        let rate = |n: u64| if total_it == 0 { 0.0 } else { n as f64 / total_it as f64 };

        report.rows.push(CellRow {
            runs: n_t as u32,
            errored_runs: errored,
            compile_passes: compile_passes as u32,
            func_passes: func_passes as u32,
            mean_crystal_bleu: bleu_sum / n_t as f64,
            pass_at_1_comp: pass_at_k(PassAtKInput::new(n_t, compile_passes, 1)?)?,
            pass_at_1_func: pass_at_k(PassAtKInput::new(n_t, func_passes, 1)?)?,
            total_iterations: total_it,
            wrong_format_iterations: wf_it,
            repetition_iterations: rep_it,
            wrong_format_rate: rate(wf_it),
            repetition_rate: rate(rep_it),
            input_tokens: valid.iter().map(|r| r.totals.input_tokens).sum(),
            output_tokens: valid.iter().map(|r| r.totals.output_tokens).sum(),
            task_id: key.task_id,
            model_id: key.model_id,
            method: key.method,
        });
    }
    Ok(report)
}
