use std::fmt::Write as _;
use std::path::Path;

use super::run::{Evaluation, GranularityOutcome, Manifest};
use crate::error::{Error, Result};
use crate::eval::format_table;

fn load_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::load(path.display().to_string(), e.to_string()))
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Plain-text summary of a run directory. Works on partial runs; sections
/// whose stage did not run are marked as skipped.
pub fn report(workdir: impl AsRef<Path>) -> Result<String> {
    let dir = workdir.as_ref();
    let manifest = Manifest::load(dir)?;
    let granularity: Option<GranularityOutcome> = match manifest.stage("granularity", None) {
        Some(_) => load_optional(&dir.join("granularity.json"))?,
        None => None,
    };
    let evaluation: Option<Evaluation> = match manifest.stage("evaluate", None) {
        Some(_) => load_optional(&dir.join("evaluation.json"))?,
        None => None,
    };

    let mut out = String::new();
    let status = if manifest.complete { "complete" } else { "incomplete" };
    writeln!(out, "run {status}, config {}", &manifest.config_sha256[..12]).unwrap();
    writeln!(out, "\nstages").unwrap();
    for s in &manifest.stages {
        let iter = s.iteration.map_or(String::new(), |i| format!(" #{i}"));
        let files: Vec<&str> = s.artifacts.keys().map(String::as_str).collect();
        writeln!(out, "  {:<12} {}", format!("{}{iter}", s.stage), files.join(", ")).unwrap();
    }
    for s in &manifest.skipped {
        writeln!(out, "  {s:<12} skipped").unwrap();
    }

    let j = &manifest.judge_stats;
    writeln!(
        out,
        "\njudge: {} queries, {} cache hits, {} remote calls, {} ambiguous, {} transport failures",
        j.queries, j.cache_hits, j.remote_calls, j.ambiguous, j.transport_failures
    )
    .unwrap();
    let c = &manifest.cost_estimate;
    writeln!(out, "budgeted remote cost: {} queries, {:.0} tokens, ${:.4}", c.queries, c.tokens, c.dollars).unwrap();

    writeln!(out, "\ngranularity").unwrap();
    match &granularity {
        Some(g) => {
            writeln!(out, "  chosen k: {} from {} pairs ({} ambiguous)", g.decision.k_star, g.pairs, g.decision.ambiguous).unwrap();
            for (name, k) in &g.baselines {
                writeln!(out, "  {name}: {k}").unwrap();
            }
        }
        None => writeln!(out, "  skipped").unwrap(),
    }

    writeln!(out, "\nevaluation").unwrap();
    match &evaluation {
        Some(e) => {
            let names: Vec<String> = (1..=e.refined.len()).map(|i| format!("refined #{i}")).collect();
            let mut rows = vec![("base", &e.base)];
            rows.extend(names.iter().map(String::as_str).zip(&e.refined));
            for line in format_table(&rows).lines() {
                writeln!(out, "  {line}").unwrap();
            }
            if let Some(last) = e.refined.last() {
                writeln!(out, "  accuracy change: {:+.2} points", 100.0 * (last.accuracy_mean - e.base.accuracy_mean)).unwrap();
            }
            for t in &e.triplets {
                writeln!(
                    out,
                    "  triplets #{}: judge {}, embedding {} -> {} ({} with a label answer)",
                    t.iteration,
                    pct(t.before.judge),
                    pct(t.before.embedding),
                    pct(t.after.embedding),
                    t.before.gt_count
                )
                .unwrap();
            }
            if let Some(g) = &e.granularity {
                writeln!(out, "  granularity error: {:.2}% (k {} vs {} classes)", g.error, g.k_star, g.k_true).unwrap();
                for (name, err) in &g.baseline_errors {
                    writeln!(out, "  {name} error: {err:.2}%").unwrap();
                }
            }
        }
        None => writeln!(out, "  skipped").unwrap(),
    }
    Ok(out)
}
