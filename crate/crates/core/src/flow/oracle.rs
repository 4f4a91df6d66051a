//! Analytic endpoint prediction from the cell geometry alone.

use crate::dyadic::{decode, encode, sigma, wrap_unit, TorusPoint};
use crate::field::{Field, Half};
use crate::error::Result;

/// Endpoint after stages `1..=stages` for a point whose orbits all turn by a
/// full half period: every half-window either leaves it outside all cells or
/// reflects it through its cell's centre. `None` when some cell holds it in
/// the boundary layer `{psi < eps_n}`, where no such promise is made.
pub fn predict_endpoint(field: &Field, p: [f64; 2], stages: u32) -> Option<[f64; 2]> {
    let mut q = [wrap_unit(p[0]), wrap_unit(p[1])];
    for n in 1..=stages.min(field.n_stages()) {
        let eps = field.params().stage_eps(n);
        for half in [Half::First, Half::Second] {
            if let Some((rect, psi)) = field.local_psi(n, half, q) {
                if psi < eps || psi <= 0.0 {
                    return None;
                }
                let r = rect.reflect(q);
                q = [wrap_unit(r[0]), wrap_unit(r[1])];
            }
        }
    }
    Some(q)
}

/// The point with the same position inside its depth-`depth` cylinder as
/// `p`, in the cylinder obtained by applying the digit involution.
pub fn sigma_partner(p: TorusPoint, depth: u32) -> Result<TorusPoint> {
    let a = encode(p, depth)?;
    let corner = decode(&a);
    let other = decode(&sigma(&a));
    Ok(TorusPoint::new(other.x1 + (p.x1 - corner.x1), other.x2 + (p.x2 - corner.x2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{psi_steps, DigitAddress};
    use crate::field::{params_from, Mode};

    #[test]
    fn oracle_realises_the_digit_steps() {
        let f = Field::build(params_from(0, 0.5, 0.2, Mode::Bounded, 4).unwrap()).unwrap();
        let a: DigitAddress = "011101/110100".parse().unwrap();
        let c = crate::dyadic::decode_center(&a);
        let end = predict_endpoint(&f, [c.x1, c.x2], 4).unwrap();
        let got = encode(TorusPoint::new(end[0], end[1]), 6).unwrap();
        assert_eq!(got, psi_steps(&a, 4).unwrap());
    }

    #[test]
    fn plateau_points_are_not_predicted() {
        let f = Field::build(params_from(0, 0.5, 0.2, Mode::Hoelder, 2).unwrap()).unwrap();
        assert!(predict_endpoint(&f, [0.5, 0.25 + 1e-7], 2).is_none());
        assert!(predict_endpoint(&f, [0.5, 0.1], 1).is_some());
    }

    #[test]
    fn sigma_partner_keeps_offset() {
        let p = TorusPoint::new(0.3 + 1e-3, 0.6 + 2e-3);
        let q = sigma_partner(p, 4).unwrap();
        let back = sigma_partner(q, 4).unwrap();
        assert!(p.distance(back) < 1e-15);
        assert_ne!(encode(p, 4).unwrap(), encode(q, 4).unwrap());
    }
}
