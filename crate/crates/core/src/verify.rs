//! Verification suites with pass/fail checks and a flat text report.

use std::fmt::Write as _;

use crate::dyadic::{encode, invert_psi, psi_map, psi_step, sigma, AddressSampler, DigitAddress, TorusPoint};
use crate::error::Result;
use crate::field::{distance_to_cell_boundaries, params_from, stage_norm_report, Field, Mode};
use crate::flow::{
    advance, digit_match_rate, measure_preservation_test, obstruction_demo, predict_endpoint, sample_points,
    two_to_one_check, Direction, StepPolicy, BOUNDARY_EXCLUSION,
};
use crate::streamfn::{contour_polygon, is_convex_polygon, sublevel_area, StreamContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Dyadic,
    Stream,
    Field,
    Flow,
    All,
}

impl Suite {
    /// Whether the suite runs against a built field.
    pub fn needs_field(self) -> bool {
        matches!(self, Suite::Field | Suite::Flow | Suite::All)
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Suite::Dyadic => "dyadic",
            Suite::Stream => "stream",
            Suite::Field => "field",
            Suite::Flow => "flow",
            Suite::All => "all",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dyadic" => Ok(Suite::Dyadic),
            "stream" => Ok(Suite::Stream),
            "field" => Ok(Suite::Field),
            "flow" => Ok(Suite::Flow),
            "all" => Ok(Suite::All),
            _ => Err(crate::Error::Parse { what: "suite", reason: format!("unknown suite `{s}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

/// Knobs shared by the suites.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub sample_count: usize,
    pub depth: u32,
    pub seed: u64,
    pub policy: StepPolicy,
    /// Policy for the large pushforward runs.
    pub bulk_policy: StepPolicy,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { sample_count: 10_000, depth: 4, seed: 1, policy: StepPolicy::default(), bulk_policy: StepPolicy::coarse() }
    }
}

pub fn dyadic_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let start: DigitAddress = "011101/110100".parse()?;
    let shown = ["111101/110100", "111101/100100", "110101/100100", "110101/100100", "110101/100100"];
    let mut a = start;
    let mut ok = true;
    for (i, want) in shown.iter().enumerate() {
        a = psi_step(&a, i as u32 + 1)?;
        ok &= a.to_string() == *want;
    }
    ok &= psi_map(&start)?.to_string() == "11010/10010";
    out.push(check("example_evolution", ok, format!("{start} -> {a}")));

    let p0 = invert_psi(&start, 0)?.to_string();
    let p1 = invert_psi(&start, 1)?.to_string();
    out.push(check(
        "example_preimages",
        p0 == "011111/100001" && p1 == "110101/110100",
        format!("{p0}, {p1}"),
    ));

    let mut sampler = AddressSampler::new(opts.seed);
    let mut failures = 0;
    for _ in 0..opts.sample_count {
        let t = sampler.sample(16)?;
        let want = t.truncate(15)?;
        let q0 = invert_psi(&t, 0)?;
        let q1 = invert_psi(&t, 1)?;
        if psi_map(&q0)? != want || psi_map(&q1)? != want || sigma(&q0) != q1 {
            failures += 1;
        }
    }
    out.push(check("two_to_one", failures == 0, format!("{} targets, {failures} failures", opts.sample_count)));

    let depth = 8;
    let boxes = 1usize << (2 * depth);
    let mut seen = vec![false; boxes];
    for i in 0..boxes {
        seen[sigma(&DigitAddress::from_box_index(depth, i)?).box_index()] = true;
    }
    let hit = seen.iter().filter(|&&b| b).count();
    out.push(check("sigma_permutation", hit == boxes, format!("{hit} of {boxes} depth-{depth} cylinders hit")));
    Ok(out)
}

pub fn stream_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    for eps in [1e-2, 1e-3] {
        let ctx = StreamContext::new(eps)?;
        for i in 0..20 {
            let level = ctx.r_eps() + (ctx.max_value() - ctx.r_eps()) * i as f64 / 20.0;
            worst = worst.max((ctx.verify_uniform_travel(level)? - 1.0).abs());
        }
    }
    out.push(check("travel_time_uniform", worst < 1e-3, format!("max |T - 1| = {worst:.2e}")));

    let eps: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
    let pts: Vec<(f64, f64)> = eps.iter().map(|&e| Ok((e.ln(), sublevel_area(e)?.ln()))).collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    out.push(check("sublevel_area_slope", slope >= 2.0 / 3.0 - 0.05, format!("slope {slope:.4}")));

    let convex = [0.01, 0.1, 0.5, 0.9].iter().map(|&l| contour_polygon(l, 64).map(|p| is_convex_polygon(&p))).collect::<Result<Vec<_>>>()?;
    out.push(check("contours_convex", convex.iter().all(|&c| c), format!("{convex:?}")));
    Ok(out)
}

pub fn field_suite(field: &Field, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let t_end = field.t_end();
    let h = 1e-8;
    let pts = sample_points(opts.sample_count, opts.seed);
    let mut worst: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let t = t_end * (i as f64 + 0.5) / pts.len() as f64;
        let v = |a: f64, b: f64| -> Result<[f64; 2]> { Ok(field.v_eval(t, TorusPoint::new(a.rem_euclid(1.0), b.rem_euclid(1.0)))?.as_array()) };
        let d = |f: &dyn Fn(f64) -> Result<f64>, x: f64| -> Result<f64> {
            Ok((8.0 * (f(x + h)? - f(x - h)?) - (f(x + 2.0 * h)? - f(x - 2.0 * h)?)) / (12.0 * h))
        };
        let div = d(&|a| Ok(v(a, p.x2)?[0]), p.x1)? + d(&|b| Ok(v(p.x1, b)?[1]), p.x2)?;
        worst = worst.max(div.abs());
    }
    out.push(check("divergence_free", worst < 1e-4, format!("max |div v| = {worst:.1e} on {} samples", pts.len())));

    // the bounded field jumps across cell diagonals, so RK4 only lands in
    // the right cylinder there; the smooth field is held to 1e-5
    let mut err: f64 = 0.0;
    let mut used = 0;
    let mut same_cylinder = 0;
    let stages = field.n_stages();
    for p in pts.iter().take(opts.sample_count.min(500)) {
        let x = [p.x1, p.x2];
        if distance_to_cell_boundaries(stages, x) < BOUNDARY_EXCLUSION {
            continue;
        }
        if let Some(want) = predict_endpoint(field, x, stages) {
            let got = advance(field, Direction::Forward, x, 0.0, t_end, &opts.policy)?;
            let (g, w) = (TorusPoint::new(got[0], got[1]), TorusPoint::new(want[0], want[1]));
            err = err.max(g.distance(w));
            same_cylinder += usize::from(encode(g, stages + 2)? == encode(w, stages + 2)?);
            used += 1;
        }
    }
    let hit_rate = same_cylinder as f64 / used.max(1) as f64;
    let passed = match field.params().mode {
        Mode::Hoelder => err < 1e-5,
        Mode::Bounded => hit_rate >= 0.98,
    };
    out.push(check(
        "endpoint_reflections",
        passed,
        format!("max error {err:.1e}, {hit_rate:.4} in the predicted cylinder, over {used} good-set samples"),
    ));

    if field.params().mode == Mode::Hoelder {
        let p = field.params();
        let six = Field::build(params_from(p.k, p.alpha, p.delta, Mode::Hoelder, 6)?)?;
        let norms: Vec<f64> = (1..=6).map(|n| stage_norm_report(&six, n, 2000, opts.seed).holder).collect();
        let worst = norms.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        out.push(check("holder_decay", worst < 1.0, format!("max consecutive ratio {worst:.3}")));
    }
    Ok(out)
}

pub fn flow_suite(field: &Field, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = field.params();
    let m = digit_match_rate(field, opts.sample_count, opts.seed, &opts.policy)?;
    let floor = match p.mode {
        Mode::Hoelder => 1.0 - p.delta - 0.02,
        Mode::Bounded => 0.98,
    };
    out.push(check(
        "digit_match",
        m.settled_rate() >= floor && m.excluded_fraction() < 0.02,
        format!("rate {:.4} (floor {floor:.2}), excluded {:.4}", m.settled_rate(), m.excluded_fraction()),
    ));

    let checkpoints: Vec<f64> = p.tau_partials()[1..].to_vec();
    let hists = measure_preservation_test(field, Direction::Forward, &checkpoints, opts.sample_count, opts.depth, opts.seed, &opts.bulk_policy)?;
    let ps: Vec<f64> = hists.iter().map(|h| h.p_value).collect();
    out.push(check("measure_preservation", ps.iter().all(|&x| x > 0.01), format!("p-values {ps:.3?}")));

    let c = two_to_one_check(field, opts.sample_count.min(2000), opts.seed, &opts.policy)?;
    out.push(check(
        "two_to_one_collision",
        c.collision_rate() >= 0.95,
        format!("{:.4} of {} pairs collide, median distance {:.2e}", c.collision_rate(), c.pairs, c.median_distance),
    ));

    let fwd = hists.last().map_or(0.0, |h| h.coverage_fraction);
    let back = obstruction_demo(field, opts.sample_count, opts.depth, opts.seed, &opts.bulk_policy)?;
    let bound = 0.5 + p.delta + 0.05;
    out.push(check(
        "obstruction_coverage",
        back.coverage_fraction <= bound && fwd >= 0.98,
        format!(
            "coverage {:.4} (bound {bound:.2}), forward control {fwd:.4}; qualitative: one numerical selection",
            back.coverage_fraction
        ),
    ));
    Ok(out)
}

/// Runs a suite; `field` is required for suites that need one.
pub fn run_suite(suite: Suite, field: Option<&Field>, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let need = || {
        field.ok_or(crate::Error::InvalidParam { name: "field", reason: format!("suite `{suite}` needs a built field") })
    };
    Ok(match suite {
        Suite::Dyadic => dyadic_suite(opts)?,
        Suite::Stream => stream_suite()?,
        Suite::Field => field_suite(need()?, opts)?,
        Suite::Flow => flow_suite(need()?, opts)?,
        Suite::All => {
            let f = need()?;
            let mut v = dyadic_suite(opts)?;
            v.extend(stream_suite()?);
            v.extend(field_suite(f, opts)?);
            v.extend(flow_suite(f, opts)?);
            v
        }
    })
}

/// Flat `key = value` report; `result` is `pass` iff every check passed.
pub fn report(suite: Suite, checks: &[Check], header: &[(&str, String)]) -> String {
    let mut s = String::from("# dyadflow verify report\n");
    let _ = writeln!(s, "suite = {suite}");
    for (k, v) in header {
        let _ = writeln!(s, "{k} = {v}");
    }
    for c in checks {
        let _ = writeln!(s, "check.{}.status = {}", c.name, if c.passed { "pass" } else { "fail" });
        let _ = writeln!(s, "check.{}.detail = {}", c.name, c.detail);
    }
    let _ = writeln!(s, "result = {}", if checks.iter().all(|c| c.passed) { "pass" } else { "fail" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_suite_passes() {
        let opts = VerifyOptions { sample_count: 500, ..VerifyOptions::default() };
        let checks = dyadic_suite(&opts).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn field_suites_require_a_field() {
        assert!(run_suite(Suite::Flow, None, &VerifyOptions::default()).is_err());
        assert!("nope".parse::<Suite>().is_err());
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
    }

    #[test]
    fn report_summarises() {
        let r = report(Suite::Dyadic, &[check("a", true, "x".into()), check("b", false, "y".into())], &[("seed", "1".into())]);
        assert!(r.contains("check.b.status = fail"));
        assert!(r.ends_with("result = fail\n"));
        assert!(r.contains("seed = 1"));
    }
}
