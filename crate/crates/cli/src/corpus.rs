//! Golden-file checks over a directory of models.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use similar::TextDiff;
use spalps_core::meanfield::evaluate_equations;
use spalps_core::{build_init_matrix, build_stt, compare, derive_equations, ensemble, parse, render, RunConfig};

use crate::{load_source, read, states_of, write_atomic, Failure};

/// Settings for the small-scale mean-field versus ensemble check.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareSpec {
    scale: u64,
    replicas: usize,
    steps: usize,
    seed: u64,
    threshold: f64,
}

fn models(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "palps"))
        .filter(|p| !p.to_string_lossy().ends_with(".render.palps"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Row label of a golden line, e.g. `R5 [prob]` or `R1(t)@l`.
fn cell_of(line: &str) -> &str {
    line.split(" -> ").next().unwrap_or(line).split(" = ").next().unwrap_or(line)
}

fn check_golden(path: &Path, actual: &str, bless: bool) -> Result<Option<String>, Failure> {
    if bless {
        write_atomic(path, actual.as_bytes())?;
        return Ok(None);
    }
    let expected = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(_) => return Ok(Some(format!("missing golden {}", path.display()))),
    };
    if expected == actual {
        return Ok(None);
    }
    let name = path.display().to_string();
    let mut msg = String::new();
    let exp_lines: Vec<&str> = expected.lines().collect();
    let act_lines: Vec<&str> = actual.lines().collect();
    if let Some(i) = (0..exp_lines.len().max(act_lines.len())).find(|&i| exp_lines.get(i) != act_lines.get(i)) {
        let line = exp_lines.get(i).or(act_lines.get(i)).copied().unwrap_or("");
        msg.push_str(&format!("{name}:{}: mismatch in `{}`\n", i + 1, cell_of(line)));
    }
    msg.push_str(
        &TextDiff::from_lines(expected.as_str(), actual)
            .unified_diff()
            .header(&name, "generated")
            .to_string(),
    );
    Ok(Some(msg))
}

fn check_model(path: &Path, bless: bool) -> Result<Vec<String>, Failure> {
    let file = path.display().to_string();
    let model = match load_source(&read(path)?, &file) {
        Ok(m) => m,
        Err(Failure::Invalid(msg)) => return Ok(vec![msg]),
        Err(e) => return Err(e),
    };
    let space = match states_of(&model) {
        Ok(s) => s,
        Err(Failure::Invalid(msg)) => return Ok(vec![msg]),
        Err(e) => return Err(e),
    };
    let table = build_stt(&model, &space);
    let init = build_init_matrix(&model, &space);
    let eqs = derive_equations(&table, &init).map_err(|e| Failure::Invalid(e.to_string()))?;
    let mut problems = Vec::new();
    let rendered = render(model.spec());
    if parse(&rendered).as_ref() != Ok(model.spec()) {
        problems.push("rendered model does not parse back to the same model".to_string());
    }
    let golden = |ext: &str| path.with_extension(ext);
    for (ext, text) in [
        ("stt.txt", table.render()),
        ("eqs.txt", eqs.render()),
        ("render.palps", rendered),
    ] {
        if let Some(p) = check_golden(&golden(ext), &text, bless)? {
            problems.push(p);
        }
    }

    let spec_path = golden("compare.json");
    if spec_path.exists() {
        let spec: CompareSpec = serde_json::from_str(&read(&spec_path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;
        let mut scaled = eqs.clone();
        scaled.init.iter_mut().for_each(|v| *v *= spec.scale);
        let mf = evaluate_equations(&scaled, spec.steps);
        let config = RunConfig {
            seed: spec.seed,
            steps: spec.steps,
            replicas: spec.replicas,
            scale: spec.scale,
        };
        let ens = ensemble(&model, &space, &config).map_err(|e| Failure::Usage(e.to_string()))?;
        let report = compare(&mf, &ens).map_err(Failure::Usage)?;
        println!(
            "  {}: compare max relative L1 error {:.5} (threshold {})",
            model_name(path),
            report.max_error,
            spec.threshold
        );
        if !report.misaligned.is_empty() {
            problems.push(format!("compare: misaligned frames {:?}", report.misaligned));
        }
        if report.max_error >= spec.threshold {
            problems.push(format!(
                "compare: max relative L1 error {} at step {} exceeds threshold {}",
                report.max_error, report.max_step, spec.threshold
            ));
        }
    }
    Ok(problems)
}

fn model_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run(dir: &Path, bless: bool) -> Result<(), Failure> {
    let paths = models(dir)?;
    if paths.is_empty() {
        return Err(Failure::Usage(format!("no .palps models in {}", dir.display())));
    }
    let mut failed = 0;
    for path in &paths {
        let problems = check_model(path, bless)?;
        if problems.is_empty() {
            println!("PASS {}", model_name(path));
        } else {
            failed += 1;
            println!("FAIL {}", model_name(path));
            for p in problems {
                println!("{p}");
            }
        }
    }
    if bless {
        println!("blessed {} model(s)", paths.len());
    }
    if failed > 0 {
        return Err(Failure::Invalid(format!("{failed} corpus model(s) failed")));
    }
    Ok(())
}
