use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wronskp_core::asymptotics::{AsymptoticSoliton, Side, kpi_phase_shift, measure_far_field};
use wronskp_core::kpfield::{Axis, FieldError, FieldSample, GridSpec, grid_sample, summarize};
use wronskp_core::presets::{self, PROBE_Y};
use wronskp_core::{ExpSum, Model, Scenario};

use crate::verify::run_verify;
use crate::{CliError, Outcome};

/// `%.9g`-style decimal: 9 significant digits, trailing zeros trimmed.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_zeros(&s)
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s.to_string() }
}

/// `a:b:n`.
pub fn parse_axis(spec: &str) -> Result<Axis, CliError> {
    let bad = || CliError::Config(format!("axis {spec:?} must be a:b:n with a < b and n >= 2"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    Axis::new(a, b, n).map_err(|_| bad())
}

/// Comma-separated times.
pub fn parse_times(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::Config(format!("time list {spec:?} must be comma-separated numbers")))
}

pub fn grid_csv(grid: &GridSpec, samples: &[Result<FieldSample, FieldError>]) -> String {
    let mut s = String::with_capacity(samples.len() * 40);
    s.push_str("x,y,t,u\n");
    for (p, r) in grid.points().iter().zip(samples) {
        let u = r.as_ref().map(|f| f.u).unwrap_or(f64::NAN);
        let _ = writeln!(s, "{},{},{},{}", fmt_sig9(p.x), fmt_sig9(p.y), fmt_sig9(p.t), fmt_sig9(u));
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn min_max_line(samples: &[Result<FieldSample, FieldError>]) -> String {
    let s = summarize(samples);
    format!(
        "u: min {} max {} over {} samples ({} singular)",
        fmt_sig9(s.min_u),
        fmt_sig9(s.max_u),
        s.samples,
        s.singular
    )
}

pub fn cmd_verify(scenario: &Scenario, out: &mut dyn std::io::Write) -> Result<Outcome, CliError> {
    let rep = run_verify(scenario)?;
    out.write_all(rep.render().as_bytes()).map_err(io)?;
    Ok(Outcome::from_pass(rep.passed()))
}

pub fn cmd_grid(scenario: &Scenario, grid: &GridSpec, path: &Path, out: &mut dyn std::io::Write) -> Result<Outcome, CliError> {
    let tau = scenario.tau().map_err(|e| CliError::Config(e.to_string()))?;
    let samples = grid_sample(&tau, scenario.sigma(), grid);
    write_file(path, &grid_csv(grid, &samples))?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    writeln!(out, "{}", min_max_line(&samples)).map_err(io)?;
    Ok(Outcome::Pass)
}

fn soliton_line(s: &AsymptoticSoliton, kpi: bool) -> String {
    let pair = if kpi { format!("[{0},{0}bar]", s.pair.0) } else { format!("[{},{}]", s.pair.0, s.pair.1) };
    let mut line = format!(
        "  {pair:<10} A {:<12} K ({}, {}) Omega {} offset {}",
        fmt_sig9(s.amplitude),
        fmt_sig9(s.wavevector[0]),
        fmt_sig9(s.wavevector[1]),
        fmt_sig9(s.frequency),
        fmt_sig9(s.phase_offset)
    );
    if let Some(agree) = s.closed_form_agrees() {
        line.push_str(if agree { "  closed-form C: agrees" } else { "  closed-form C: DISAGREES" });
    } else if !kpi {
        line.push_str("  closed-form C: undefined");
    }
    line
}

/// Predicted solitons per side, optionally with far-field measurements at `|y| = probe_y`.
pub fn asymptotics_report(scenario: &Scenario, tau: &ExpSum, measure: Option<(f64, f64)>) -> Result<(String, bool), CliError> {
    let sol = scenario.predict(tau).map_err(|e| CliError::Config(e.to_string()))?;
    let kpi = scenario.model() == Model::Kpi;
    let mut s = String::new();
    let mut ok = true;
    for side in [Side::YPlus, Side::YMinus] {
        let list: Vec<&AsymptoticSoliton> = sol.iter().filter(|x| x.side == side).collect();
        let plural = if list.len() == 1 { "" } else { "s" };
        let _ = writeln!(s, "{}: {} soliton{plural}", side.label(), list.len());
        for x in list {
            let _ = writeln!(s, "{}", soliton_line(x, kpi));
            if let Some((probe_y, t)) = measure {
                let y = probe_y.abs() * side.sign();
                match measure_far_field(tau, scenario.sigma(), x, y, t) {
                    Ok(m) => {
                        let da = (m.amplitude - x.amplitude).abs() / x.amplitude;
                        let dd = (m.offset - x.phase_offset).abs() / x.phase_offset.abs().max(1.0);
                        let pass = da <= 0.01 && dd <= 0.01;
                        ok &= pass;
                        let _ = writeln!(
                            s,
                            "    measured at y = {}: A {} ({:.3}%), offset {} (dev {:.2e})  {}",
                            fmt_sig9(y),
                            fmt_sig9(m.amplitude),
                            100.0 * da,
                            fmt_sig9(m.offset),
                            dd,
                            if pass { "PASS" } else { "FAIL" }
                        );
                    }
                    Err(e) => {
                        ok = false;
                        let _ = writeln!(s, "    measurement failed: {e}  FAIL");
                    }
                }
            }
        }
    }
    if kpi {
        let n = sol.iter().map(|x| x.pair.0).max().unwrap_or(0);
        for k in 1..=n {
            if let Some(shift) = kpi_phase_shift(&sol, k) {
                let _ = writeln!(s, "phase shift of soliton {k} (y->+inf minus y->-inf): {}", fmt_sig9(shift));
            }
        }
    }
    Ok((s, ok))
}

pub fn cmd_asymptotics(scenario: &Scenario, measure: Option<(f64, f64)>, out: &mut dyn std::io::Write) -> Result<Outcome, CliError> {
    let tau = scenario.tau().map_err(|e| CliError::Config(e.to_string()))?;
    let (text, ok) = asymptotics_report(scenario, &tau, measure)?;
    out.write_all(text.as_bytes()).map_err(io)?;
    Ok(Outcome::from_pass(ok))
}

pub fn cmd_figure(n: usize, dir: &Path, out: &mut dyn std::io::Write) -> Result<Outcome, CliError> {
    let preset = presets::preset(n).ok_or_else(|| CliError::Config(format!("figure {n} does not exist; figures are 1..6")))?;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let scenario = &preset.scenario;
    let tau = scenario.tau().map_err(|e| CliError::Config(e.to_string()))?;
    let grid = preset.grid();
    let samples = grid_sample(&tau, scenario.sigma(), &grid);
    let csv_path = dir.join(format!("fig{n}.csv"));
    write_file(&csv_path, &grid_csv(&grid, &samples))?;

    let mut report = String::new();
    let _ = writeln!(report, "figure {n}: {}", preset.title);
    let per_t = grid.x.n * grid.y.n;
    for (k, &t) in grid.t.iter().enumerate() {
        let _ = writeln!(report, "t = {}: {}", fmt_sig9(t), min_max_line(&samples[k * per_t..(k + 1) * per_t]));
    }
    let verify = run_verify(scenario)?;
    report.push_str("\nverification\n");
    report.push_str(&verify.render());
    report.push_str("\nasymptotic solitons\n");
    let measure = (n <= 4).then_some((PROBE_Y, 0.0));
    let (text, asym_ok) = asymptotics_report(scenario, &tau, measure)?;
    report.push_str(&text);
    let report_path = dir.join(format!("fig{n}_report.txt"));
    write_file(&report_path, &report)?;

    out.write_all(report.as_bytes()).map_err(io)?;
    writeln!(out, "wrote {} and {}", csv_path.display(), report_path.display()).map_err(io)?;
    Ok(Outcome::from_pass(verify.passed() && asym_ok))
}

/// `τ` as CSV: one row per term, coefficient then phase coefficients.
pub fn expand_csv(tau: &ExpSum) -> String {
    let mut s = String::from("coeff_re,coeff_im,cx_re,cx_im,cy_re,cy_im,ct_re,ct_im,c0_re,c0_im\n");
    for t in tau.terms() {
        let vals = [t.coeff, t.phase.cx, t.phase.cy, t.phase.ct, t.phase.c0];
        let cells: Vec<String> = vals.iter().flat_map(|z| [fmt_sig9(z.re), fmt_sig9(z.im)]).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn cmd_expand(scenario: &Scenario, path: Option<&Path>, out: &mut dyn std::io::Write) -> Result<Outcome, CliError> {
    let tau = scenario.tau().map_err(|e| CliError::Config(e.to_string()))?;
    let csv = expand_csv(&tau);
    match path {
        Some(p) => {
            write_file(p, &csv)?;
            writeln!(out, "wrote {} terms to {}", tau.len(), p.display()).map_err(io)?;
        }
        None => out.write_all(csv.as_bytes()).map_err(io)?,
    }
    Ok(Outcome::Pass)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(0.5), "0.5");
        assert_eq!(fmt_sig9(-15.0), "-15");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456.789012), "123456.789");
        assert_eq!(fmt_sig9(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig9(2.0e12), "2e12");
        assert_eq!(fmt_sig9(f64::NAN), "nan");
    }

    #[test]
    fn axis_and_times_parsing() {
        let a = parse_axis("-1:1:3").unwrap();
        assert_eq!(a.coords(), vec![-1.0, 0.0, 1.0]);
        for bad in ["1:1:3", "0:1", "0:1:1", "a:1:3", "0:1:-2"] {
            assert!(parse_axis(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_times("-5, 0,5").unwrap(), vec![-5.0, 0.0, 5.0]);
        assert!(parse_times("").is_err());
        assert!(parse_times("1,,2").is_err());
    }

    #[test]
    fn endpoints_only_grid_has_four_rows_per_time() {
        let scenario = presets::preset(3).unwrap().scenario;
        let tau = scenario.tau().unwrap();
        let ax = parse_axis("-1:1:2").unwrap();
        let grid = GridSpec::new(ax, ax, vec![0.0, 1.0]).unwrap();
        let csv = grid_csv(&grid, &grid_sample(&tau, scenario.sigma(), &grid));
        assert_eq!(csv.lines().count(), 1 + 8);
        assert!(csv.starts_with("x,y,t,u\n-1,-1,0,"));
    }

    #[test]
    fn expand_lists_every_term() {
        let scenario = presets::preset(1).unwrap().scenario;
        let tau = scenario.tau().unwrap();
        let csv = expand_csv(&tau);
        assert_eq!(csv.lines().count(), tau.len() + 1);
        assert_eq!(tau.len(), 10);
    }
}
