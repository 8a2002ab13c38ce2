use std::collections::BTreeMap;

use super::{ColumnRef, EnhancementConfig, ValueIndex};

/// Sampled values per column, ordered by relevance. Columns without any
/// selected value are absent.
pub type ColumnValues = BTreeMap<ColumnRef, Vec<String>>;

/// Fraction of `value` covered by its longest common substring with
/// `question`, compared case-insensitively over characters. In `[0, 1]`.
pub fn bridge_score(question: &str, value: &str) -> f64 {
    let q: Vec<char> = question.to_lowercase().chars().collect();
    let v: Vec<char> = value.to_lowercase().chars().collect();
    if v.is_empty() || q.is_empty() {
        return 0.0;
    }
    let mut prev = vec![0usize; v.len() + 1];
    let mut cur = vec![0usize; v.len() + 1];
    let mut best = 0;
    for qc in &q {
        for (j, vc) in v.iter().enumerate() {
            cur[j + 1] = if qc == vc { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best as f64 / v.len() as f64
}

/// Selects up to `cfg.m` values per column for `question`.
///
/// Stage one takes the top `cfg.k` documents of each column by BM25 against
/// the whole question. Stage two re-ranks that pool by [`bridge_score`],
/// drops candidates under `cfg.bridge_threshold`, and keeps the first `m`
/// by (bridge score desc, BM25 score desc, pool position asc).
pub fn retrieve_column_values(
    index: &ValueIndex,
    question: &str,
    cfg: &EnhancementConfig,
) -> ColumnValues {
    let mut out = ColumnValues::new();
    if cfg.m == 0 {
        return out;
    }
    for column in index.columns() {
        if column.is_numeric() && !cfg.include_numeric {
            continue;
        }
        let pool = column.rank(question, index.k1(), index.b(), cfg.k);
        let mut scored: Vec<(f64, f64, usize, u32)> = pool
            .iter()
            .enumerate()
            .map(|(pos, s)| {
                (
                    bridge_score(question, column.doc(s.doc)),
                    s.score,
                    pos,
                    s.doc,
                )
            })
            .filter(|(bridge, ..)| *bridge >= cfg.bridge_threshold)
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(b.1.total_cmp(&a.1))
                .then(a.2.cmp(&b.2))
        });
        let picked: Vec<String> = scored
            .into_iter()
            .take(cfg.m)
            .map(|(.., doc)| column.doc(doc).to_string())
            .collect();
        if !picked.is_empty() {
            out.insert(column.column().clone(), picked);
        }
    }
    out
}
