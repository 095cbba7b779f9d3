use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Parser;
use serde::Serialize;

use synthrec::scaling::{self, FitObjective, JointScalingFit, LossCurve, PerModelFit};

#[derive(Parser)]
pub struct Args {
    /// Loss curves: delimited (model_params,tokens,loss) or JSON-lines.
    #[arg(long)]
    pub curves: PathBuf,
    /// Input format: delimited or jsonl.
    #[arg(long, default_value = "delimited")]
    pub format: String,
    /// auto fits per-model laws always and the joint law when eligible;
    /// per-model and joint force one of them.
    #[arg(long, default_value = "auto")]
    pub mode: String,
    /// Treat the loss column as perplexity and fit its natural log.
    #[arg(long, default_value_t = false)]
    pub log_loss: bool,
    /// Huber robust objective with this delta (per-model fits only).
    #[arg(long)]
    pub huber: Option<f64>,
    /// Compute budgets C (FLOPs) for optimal allocations; repeatable.
    #[arg(long = "budget")]
    pub budgets: Vec<f64>,
    /// Output fit report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also print a per-curve / joint summary table.
    #[arg(long, default_value_t = false)]
    pub table: bool,
}

#[derive(Serialize)]
struct PerModelRow {
    label: String,
    model_params: f64,
    #[serde(flatten)]
    fit: PerModelFit,
}

#[derive(Serialize)]
struct AllocationRow {
    budget: f64,
    n_opt: f64,
    d_opt: f64,
    loss: f64,
}

#[derive(Serialize)]
struct FitReport {
    per_model: Vec<PerModelRow>,
    joint: Option<JointScalingFit>,
    tradeoff: Option<TradeoffRow>,
    allocations: Vec<AllocationRow>,
}

#[derive(Serialize)]
struct TradeoffRow {
    alpha_a: f64,
    beta_b: f64,
}

pub fn run(args: Args) -> Result<serde_json::Value> {
    let mut curves: Vec<LossCurve> = match args.format.as_str() {
        "delimited" => scaling::read_curves_delimited(&args.curves)?,
        "jsonl" => scaling::read_curves_jsonl(&args.curves)?,
        other => bail!("format must be 'delimited' or 'jsonl', got '{other}'"),
    };
    if args.log_loss {
        curves = curves.iter().map(LossCurve::map_loss_ln).collect();
    }
    let objective = match args.huber {
        Some(delta) => FitObjective::Huber { delta },
        None => FitObjective::SquaredError,
    };

    let mut distinct: Vec<f64> = curves.iter().map(|c| c.model_params).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();

    let (fit_per, fit_joint) = match args.mode.as_str() {
        "auto" => (true, distinct.len() >= 3),
        "per-model" => (true, false),
        "joint" => (false, true),
        other => bail!("mode must be auto|per-model|joint, got '{other}'"),
    };

    let mut report = FitReport {
        per_model: Vec::new(),
        joint: None,
        tradeoff: None,
        allocations: Vec::new(),
    };
    if fit_per {
        for curve in &curves {
            let fit = scaling::fit_per_model_with(curve, objective)?;
            report.per_model.push(PerModelRow {
                label: curve.label.clone(),
                model_params: curve.model_params,
                fit,
            });
        }
    }
    if fit_joint {
        let joint = scaling::fit_joint(&curves)?;
        let (alpha_a, beta_b) = scaling::tradeoff_coefficients(&joint);
        for &budget in &args.budgets {
            let (n_opt, d_opt, loss) = scaling::compute_optimal_allocation(&joint, budget)?;
            report.allocations.push(AllocationRow { budget, n_opt, d_opt, loss });
        }
        report.joint = Some(joint);
        report.tradeoff = Some(TradeoffRow { alpha_a, beta_b });
    }

    super::write_json(&args.out, &report)?;
    if args.table {
        render_table(&report);
    }
    Ok(serde_json::json!({
        "cmd": "fit",
        "curves": curves.len(),
        "per_model_fits": report.per_model.len(),
        "joint": report.joint.is_some(),
        "out": args.out,
    }))
}

fn render_table(report: &FitReport) {
    if !report.per_model.is_empty() {
        eprintln!("{:<16} {:>12} {:>9} {:>9} {:>10}", "Curve", "L_inf", "A", "alpha", "rmse");
        for row in &report.per_model {
            eprintln!(
                "{:<16} {:>12.4} {:>9.4} {:>9.4} {:>10.3e}{}",
                row.label,
                row.fit.l_inf,
                row.fit.a,
                row.fit.alpha,
                row.fit.rmse,
                if row.fit.alpha_identifiable { "" } else { "  [alpha unidentifiable]" },
            );
        }
    }
    if let Some(joint) = &report.joint {
        eprintln!(
            "joint: E={:.4} A={:.4} alpha={:.4} B={:.4} beta={:.4} rmse={:.3e}",
            joint.e, joint.a, joint.alpha, joint.b, joint.beta, joint.rmse
        );
    }
    if let Some(t) = &report.tradeoff {
        eprintln!("tradeoff: alpha*A={:.4} beta*B={:.4}", t.alpha_a, t.beta_b);
    }
    for a in &report.allocations {
        eprintln!(
            "optimal at C={:.3e}: N={:.4e} D={:.4e} loss={:.4}",
            a.budget, a.n_opt, a.d_opt, a.loss
        );
    }
}
