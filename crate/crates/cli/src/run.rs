//! Executes scenario tasks in order and collects report records.

use conformal_jets::jets::{char_poly, extract_quintuple, one_jet_equivalent, two_jet_equivalent, EquivalenceVerdict};
use conformal_jets::sigma::xi_at_point;
use conformal_jets::zeros::{classify_zero, component_scan, find_zeros, jet_rank, kobayashi_model, local_model, LocalZeroModel, Region};
use conformal_jets::{FlatConformalField, Subspace};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::report::{matrix_json, vector_json, CheckRecord, Record, Report, TaskStatus};
use crate::scenario::{build_field, Scenario, TaskKind, TaskSpec};
use crate::suites::{verify, Context};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Core(#[from] conformal_jets::Error),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

type TaskOutput = (Value, Vec<CheckRecord>);

/// Runs every task of a resolved scenario. Task failures are recorded in
/// the report and do not stop the run.
pub fn run(sc: &Scenario, command: &str) -> Result<Report, crate::scenario::ScenarioError> {
    let field = sc.build()?;
    let mut report = Report::default();
    report.push(Record::Environment {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: sc.defaults.seed,
        tol: sc.defaults.tol,
    });
    report.push(Record::Scenario {
        scenario: sc.clone(),
        resolved_field: field_json(&field),
    });
    for (index, task) in sc.tasks.iter().enumerate() {
        let (status, error, result, checks) = match run_task(&field, task) {
            Ok((result, checks)) => (TaskStatus::Ok, None, result, checks),
            Err(e) => (TaskStatus::Error, Some(e.to_string()), Value::Null, Vec::new()),
        };
        report.push(Record::Task {
            index,
            kind: task.kind.as_str().to_string(),
            status,
            error,
            result,
            checks,
        });
    }
    report.finish();
    Ok(report)
}

pub fn field_json(f: &FlatConformalField) -> Value {
    json!({
        "w": vector_json(f.w()),
        "b": matrix_json(f.b()),
        "c": f.c(),
        "u": vector_json(f.u()),
        "g": matrix_json(f.space().g()),
    })
}

fn point(task: &TaskSpec) -> DVector<f64> {
    DVector::from_column_slice(task.at.as_deref().expect("resolved tasks carry `at` where needed"))
}

fn region(task: &TaskSpec) -> Result<Region, TaskError> {
    let lo = task.lo.as_deref().expect("resolved box");
    let hi = task.hi.as_deref().expect("resolved box");
    Ok(Region::new(DVector::from_column_slice(lo), DVector::from_column_slice(hi))?)
}

fn subspace_json(s: &Subspace) -> Value {
    json!({
        "dim": s.dim(),
        "basis": (0..s.dim()).map(|i| vector_json(&s.vector(i))).collect::<Vec<_>>(),
    })
}

fn model_json(m: &LocalZeroModel, kind: &str) -> Value {
    json!({
        "model": kind,
        "x": vector_json(&m.x),
        "phi": m.phi_x,
        "h": subspace_json(&m.h),
        "h_perp": subspace_json(&m.h_perp),
        "sing": subspace_json(&m.sing),
    })
}

fn verdict_json(v: &EquivalenceVerdict) -> Value {
    json!({
        "status": v.status.as_str(),
        "obstruction": v.obstruction,
        "residual": v.residual,
        "witness": v.witness.as_ref().map(|w| json!({"phi": matrix_json(&w.phi), "scale": w.scale})),
    })
}

pub fn run_task(field: &FlatConformalField, task: &TaskSpec) -> Result<TaskOutput, TaskError> {
    let space = field.space();
    let tol = task.tol();
    match task.kind {
        TaskKind::FindZeros => {
            let r = region(task)?;
            let zeros = find_zeros(field, &r, task.grid(), tol);
            Ok((
                json!({
                    "count": zeros.len(),
                    "zeros": zeros.iter().map(vector_json).collect::<Vec<_>>(),
                }),
                Vec::new(),
            ))
        }
        TaskKind::Classify => {
            let jet = field.jet_at(&point(task));
            let c = classify_zero(&jet, space, tol)?;
            Ok((
                json!({
                    "kind": c.kind.as_str(),
                    "case": c.case.as_str(),
                    "singular": c.singular,
                    "phi_abs": c.phi_abs,
                    "range_residual": c.range_residual,
                    "h_signature": [c.h_signature.0, c.h_signature.1, c.h_signature.2],
                    "margin": c.margin(tol),
                }),
                Vec::new(),
            ))
        }
        TaskKind::LocalModel => {
            let jet = field.jet_at(&point(task));
            let c = classify_zero(&jet, space, tol)?;
            let value = if c.is_essential() {
                model_json(&local_model(&jet, space, tol)?, "cone")
            } else {
                model_json(&kobayashi_model(&jet, space, tol)?, "linear")
            };
            Ok((value, Vec::new()))
        }
        TaskKind::ComponentScan => {
            let r = region(task)?;
            let report = component_scan(field, &r, task.grid(), tol)?;
            let mut checks = Vec::new();
            let comps: Vec<Value> = report
                .components
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    for ch in &c.checks {
                        let mut rec = CheckRecord::from(ch);
                        rec.name = format!("component[{i}].{}", rec.name);
                        checks.push(rec);
                    }
                    let rank = c.members.first().map(|&m| jet_rank(&report.zeros[m].jet.j, tol));
                    json!({
                        "kind": c.kind.as_str(),
                        "members": c.members.len(),
                        "essential_members": c.sigma.len(),
                        // at the first member; even for nonessential components
                        "codimension": rank,
                        "dims": c.dims.map(|d| json!({
                            "dim_sigma": d.dim_sigma,
                            "dim_regular": d.dim_regular,
                            "restricted_rank": d.restricted_rank,
                            "sign_pattern": [d.sign_pattern.0, d.sign_pattern.1, d.sign_pattern.2],
                        })),
                    })
                })
                .collect();
            Ok((
                json!({
                    "zeros": report.zeros.len(),
                    "grid_spacing": report.grid_spacing,
                    "components": comps,
                    "warnings": report.warnings,
                }),
                checks,
            ))
        }
        TaskKind::CharPoly => {
            let j = field.jacobian(&point(task));
            Ok((
                json!({
                    "coeffs": char_poly(&j).coeffs,
                    "kernel_dim": field.dim() - jet_rank(&j, tol),
                }),
                Vec::new(),
            ))
        }
        TaskKind::Quintuple => {
            let q = extract_quintuple(&field.jet_at(&point(task)), space, tol)?;
            Ok((
                json!({
                    "n": q.n,
                    "eta": matrix_json(&q.eta),
                    "b": matrix_json(&q.b),
                    "lambda": q.lambda,
                    "delta_domain": subspace_json(&q.delta_basis),
                    "delta": vector_json(&q.delta),
                }),
                Vec::new(),
            ))
        }
        TaskKind::Equivalence => {
            let target = task.target.as_ref().expect("resolved equivalence target");
            let other = build_field(&target.space, &target.field, "target.field")?;
            let jet1 = field.jet_at(&point(task));
            let jet2 = other.jet_at(&DVector::from_column_slice(&target.at));
            let jets = task.jets.unwrap_or(2);
            let (v, extra) = if jets == 1 {
                let v = one_jet_equivalent(&jet1, &jet2, space, other.space(), task.budget(), task.seed(), tol)?;
                (v, Value::Null)
            } else {
                let (v, tw) = two_jet_equivalent(&jet1, &jet2, space, other.space(), task.budget(), task.seed(), tol)?;
                let extra = tw.map_or(Value::Null, |tw| {
                    json!({
                        "tau": tw.tau,
                        "tau1": vector_json(&tw.tau1),
                        "sigma": vector_json(&tw.sigma),
                    })
                });
                (v, extra)
            };
            let checks = v.battery.iter().map(CheckRecord::from).collect();
            let mut value = verdict_json(&v);
            value["jets"] = json!(jets);
            value["two_jet"] = extra;
            Ok((value, checks))
        }
        TaskKind::Xi => {
            let s = xi_at_point(field, &point(task), None, tol)?;
            Ok((
                json!({
                    "rule": s.defined_by.as_str(),
                    "tangent": subspace_json(&s.tangent_basis),
                    "xi": vector_json(&s.xi),
                    "covector": vector_json(&s.covector),
                }),
                Vec::new(),
            ))
        }
        TaskKind::VerifyTheorem => {
            let theorem = task.theorem.expect("resolved verify task");
            let r = match (&task.lo, &task.hi) {
                (Some(_), Some(_)) => region(task)?,
                _ => Region::cube(field.dim(), crate::scenario::DEFAULT_HALF_WIDTH),
            };
            let ctx = Context::new(field.clone(), r, task.grid(), tol, task.budget());
            let outcome = verify(theorem, Some(&ctx), task.seed());
            let checks = outcome.checks.clone();
            let mut value = serde_json::to_value(&outcome).expect("suite outcomes serialize");
            if let Some(map) = value.as_object_mut() {
                map.remove("checks");
            }
            Ok((value, checks))
        }
    }
}
