//! Energy functionals: `E_U(t, u) = ‖u‖²_{H_D(U)} + ‖u_t‖²_{L²(U)}` and the
//! norms derived from it.

use serde::Serialize;

use crate::error::{Result, TatError};
use crate::grid::{Region, ScalarField};
use crate::medium::Medium;
use crate::operator::{dirichlet_form, inner_hd, inner_l2};

/// A pair `(u, u_t)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub u: ScalarField,
    pub ut: ScalarField,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e_hd: f64,
    pub e_kin: f64,
    pub total: f64,
    pub region: Region,
}

impl EnergyReport {
    pub fn csv_header() -> &'static str {
        "t,e_hd,e_kin,total,region"
    }

    pub fn csv_row(&self) -> String {
        format!("{:e},{:e},{:e},{:e},{}", self.t, self.e_hd, self.e_kin, self.total, self.region)
    }
}

/// Energy of a state over Ω̄ or the full lattice. The potential part uses the
/// Dirichlet form, so boundary values are allowed (this is the `H¹` energy).
pub fn energy(medium: &Medium, state: &WaveState, region: Region) -> Result<EnergyReport> {
    state.u.check_same_grid(&state.ut)?;
    let e_hd = dirichlet_form(medium, &state.u, &state.u, region)?;
    let e_kin = inner_l2(medium, &state.ut, &state.ut, region)?;
    Ok(EnergyReport { t: state.t, e_hd, e_kin, total: e_hd + e_kin, region })
}

/// `‖f‖_{H_D(Ω)}` for fields with zero boundary values.
pub fn hd_norm(medium: &Medium, f: &ScalarField) -> Result<f64> {
    Ok(inner_hd(medium, f, f, Region::Omega)?.max(0.0).sqrt())
}

/// Dirichlet seminorm over Ω̄ together with the largest boundary value, for
/// fields that do not vanish on ∂Ω.
pub fn hd_seminorm(medium: &Medium, f: &ScalarField) -> Result<(f64, f64)> {
    let s = dirichlet_form(medium, f, f, Region::Omega)?.max(0.0).sqrt();
    Ok((s, f.max_abs_on_boundary()))
}

pub fn l2_norm(medium: &Medium, f: &ScalarField) -> Result<f64> {
    Ok(inner_l2(medium, f, f, Region::Omega)?.max(0.0).sqrt())
}

/// Energy-space norm `‖(f, ψ)‖_𝓗` over Ω̄.
pub fn cauchy_norm(medium: &Medium, f: &ScalarField, psi: &ScalarField) -> Result<f64> {
    if f.grid != psi.grid {
        return Err(TatError::Shape("Cauchy data on different grids".into()));
    }
    let a = inner_hd(medium, f, f, Region::Omega)?;
    let b = inner_l2(medium, psi, psi, Region::Omega)?;
    Ok((a + b).max(0.0).sqrt())
}

/// Writes an energy log as CSV text.
pub fn energy_csv(log: &[EnergyReport]) -> String {
    let mut s = String::from(EnergyReport::csv_header());
    s.push('\n');
    for r in log {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
