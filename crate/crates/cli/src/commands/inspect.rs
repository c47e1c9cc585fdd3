use anyhow::bail;
use serde_json::json;

use seltune::gradcheck::{gradcheck as run_gradcheck, random_problem, GradCheckOptions};
use seltune::tuning::{apply_policy, count_params as ledger, ledger_table, table_csv, table_text, Convention, FreezePolicy};
use seltune::{GptConfig, HeadKind, ModelParams};

use super::split_list;
use crate::args::{CountParamsArgs, GradcheckArgs};
use crate::manifest::RunLog;

fn model_config(spec: &str, head: Option<&str>) -> anyhow::Result<GptConfig> {
    let cfg = GptConfig::resolve(spec)?;
    Ok(match head {
        Some(h) => cfg.with_head(HeadKind::parse(h)?),
        None => cfg,
    })
}

fn policies(list: &str) -> anyhow::Result<Vec<FreezePolicy>> {
    let out = split_list(list).map(FreezePolicy::parse).collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        bail!("no policies given");
    }
    Ok(out)
}

pub fn count_params(a: &CountParamsArgs, log: &mut RunLog) -> anyhow::Result<()> {
    let cfg = model_config(&a.model_cfg, a.head.as_deref())?;
    let convention = Convention::parse(&a.convention)
        .ok_or_else(|| anyhow::anyhow!("unknown convention {:?} (expected compact, paper or full)", a.convention))?;
    let policies = policies(&a.policy)?;
    log.config = json!({ "model": cfg, "convention": convention.name(), "policies": policies });
    let ledgers = policies.iter().map(|p| ledger(&cfg, p, convention)).collect::<Result<Vec<_>, _>>()?;
    let headers: Vec<String> = policies.iter().map(FreezePolicy::name).collect();
    let rows = ledger_table(&ledgers);
    if a.csv {
        print!("{}", table_csv(&headers, &rows));
    } else {
        println!("convention: {}", convention.name());
        print!("{}", table_text(&headers, &rows));
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs, log: &mut RunLog) -> anyhow::Result<()> {
    let cfg = model_config(&a.model_cfg, a.head.as_deref())?;
    let policies = policies(&a.policy)?;
    log.seeds.push(a.seed);
    log.config = json!({
        "model": cfg, "policies": policies, "tolerance": a.tolerance,
        "batch": a.batch, "seq": a.seq, "samples_per_tensor": a.samples,
    });
    let opts = GradCheckOptions { samples_per_tensor: a.samples, tolerance: a.tolerance, ..Default::default() };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(a.seed);
    let base = ModelParams::init(&cfg, &mut rng)?;
    let mut failed = Vec::new();
    for p in &policies {
        let mut params = base.clone();
        apply_policy(&mut params, p)?;
        let (batch, targets) = random_problem(&params, a.batch, a.seq, a.seed)?;
        let report = run_gradcheck(&params, &batch, &targets, &opts, a.seed)?;
        let status = if report.passed { "pass" } else { "FAIL" };
        println!(
            "{:<10} {status}  max rel err {:.3e} over {} tensors (tolerance {:.0e})",
            p.name(),
            report.max_rel_err,
            report.tensors.len(),
            a.tolerance
        );
        if !report.passed {
            for t in report.tensors.iter().filter(|t| t.max_rel_err > a.tolerance) {
                println!("    {}: {:.3e}", t.name, t.max_rel_err);
            }
            failed.push(p.name());
        }
    }
    if !failed.is_empty() {
        bail!("gradient check failed for {}", failed.join(", "));
    }
    Ok(())
}
