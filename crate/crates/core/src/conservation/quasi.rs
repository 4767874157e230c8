//! Conditions under which a field `Z` on `Q` with gauge `F` is a
//! quasi-symmetry.

use nalgebra::DVector;

use super::noether::CandidateField;
use super::report::ConservationReport;
use crate::constraint::ConstrainedSystem;
use crate::error::Result;
use crate::geometry::sampling::SampleSet;
use crate::geometry::{lie_bracket, TangentState};
use crate::linalg;

/// `Z^C(L) − Ḟ` at any state of `TQ`.
fn complete_minus_gauge(system: &ConstrainedSystem, cand: &CandidateField, state: &TangentState) -> Result<f64> {
    Ok(system.lagrangian().complete_lift(&cand.field, state)? - cand.gauge_rate(state)?)
}

/// Checks, with separate channels:
/// 1. `[Z, X_α] ∈ D` (normal components of the brackets),
/// 2. `Z ∈ D`,
/// 3. `Z^C(L) = Ḟ` on all of `TQ` (at `off_samples`),
/// 4. `Z^C(L) = Ḟ` on `C` and `Y^V(Z^C(L)) = Y(F)` on `C` for `Y` in `D`
///    and in the brackets of its basis.
///
/// The strong verdict uses 1, 2, 3 and the weak one 1, 2, 4.
pub fn quasi_symmetry_check(
    system: &ConstrainedSystem,
    cand: &CandidateField,
    samples: &SampleSet,
    off_samples: &SampleSet,
    tol: f64,
) -> Result<ConservationReport> {
    let basis = system.distribution().basis();
    let mut brackets_out = Vec::new();
    let mut normal = Vec::new();
    let mut on_c = Vec::new();
    let mut vertical = Vec::new();
    for state in &samples.states {
        let local = system.local_on_constraint(state)?;
        let vals = &local.vals;
        let z = cand.field.eval(vals)?;
        let scale = 1.0 + linalg::max_abs_vec(&z);
        for x in basis {
            let br = lie_bracket(&cand.field, x, vals)?;
            brackets_out.push(linalg::max_abs_vec(&local.frame.normal_components(&br)) / scale);
        }
        normal.push(linalg::max_abs_vec(&local.frame.normal_components(&z)) / scale);
        on_c.push(complete_minus_gauge(system, cand, state)?);

        // ∂/∂u^k of Z^C(L) = Z^i L_{q^i} + (J_Z u)^i L_{u^i}
        let jet = &local.jet;
        let jz = cand.field.jacobian_at(vals)?;
        let du_complete = &jet.duq * &z + jz.transpose() * &jet.du + &jet.g * (&jz * &state.u);
        let mut ys: Vec<DVector<f64>> = basis.iter().map(|x| x.eval(vals)).collect::<Result<_>>()?;
        for i in 0..basis.len() {
            for j in (i + 1)..basis.len() {
                ys.push(lie_bracket(&basis[i], &basis[j], vals)?);
            }
        }
        for y in ys {
            vertical.push(y.dot(&du_complete) - cand.gauge_derivative(state, &y)?);
        }
    }
    let off = off_samples
        .states
        .iter()
        .map(|s| complete_minus_gauge(system, cand, s))
        .collect::<Result<Vec<_>>>()?;

    let mut report = ConservationReport::new("quasi_symmetry", &cand.name, samples.seed, samples.len());
    let i = report
        .condition("bracket_in_distribution", &brackets_out, tol)
        .verdict
        .passed();
    let ii = report.condition("field_in_distribution", &normal, tol).verdict.passed();
    let iii = report.condition("complete_lift_tq", &off, tol).verdict.passed();
    let iv_a = report.condition("complete_lift_c", &on_c, tol).verdict.passed();
    let iv_b = report.condition("vertical_derivative", &vertical, tol).verdict.passed();
    report.flag("strong", i && ii && iii);
    report.flag("weak", i && ii && iv_a && iv_b);
    report
        .extra
        .insert("off_constraint_samples".into(), serde_json::json!(off_samples.len()));
    Ok(report)
}
