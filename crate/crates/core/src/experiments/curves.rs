use std::path::PathBuf;

use super::config::ExperimentConfig;
use super::output::{ensure_dir, slug, write_csv, write_text};
use super::svg::{Marker, Plot};
use crate::error::{Error, Result};
use crate::weighting::{difference_sign_changes, interior_grid, weight_curve, WeightRule};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub rules: Vec<WeightRule>,
    /// `(q, w)` per rule, in the order of `rules`.
    pub curves: Vec<Vec<(f64, f64)>>,
    pub files: Vec<PathBuf>,
}

/// Writes `weight_curve_<rule>.csv` for every rule and an overlay
/// `weight_curves.svg`. InfoSFT curves must be unimodal.
pub fn run_weight_curves(config: &ExperimentConfig) -> Result<CurveSet> {
    let section = &config.weight_curves;
    if section.rules.is_empty() {
        return Err(Error::Config("weight_curves.rules is empty".into()));
    }
    if section.grid_points < 3 {
        return Err(Error::Config(format!(
            "grid_points = {} < 3",
            section.grid_points
        )));
    }
    let rules = section
        .rules
        .iter()
        .map(|r| r.parse::<WeightRule>())
        .collect::<Result<Vec<_>>>()?;
    let grid = interior_grid(section.grid_points);
    let curves = rules
        .iter()
        .map(|rule| weight_curve(rule, &grid))
        .collect::<Result<Vec<_>>>()?;
    for (rule, curve) in rules.iter().zip(&curves) {
        if let WeightRule::InfoSft { .. } = rule {
            let w: Vec<f64> = curve.iter().map(|p| p.1).collect();
            let changes = difference_sign_changes(&w);
            if changes != 1 {
                return Err(Error::Precondition(format!(
                    "{rule} curve has {changes} slope sign changes, expected 1"
                )));
            }
        }
    }

    ensure_dir(&config.out)?;
    config.write_resolved()?;
    let mut files = Vec::new();
    let mut plot = Plot::new("Token weight w(q) = q * omega(q)", "q", "w(q)");
    for (i, (rule, curve)) in rules.iter().zip(&curves).enumerate() {
        let path = config
            .out
            .join(format!("weight_curve_{}.csv", slug(&rule.to_string())));
        write_csv(
            &path,
            "weight-curve",
            &["q", "w"],
            curve
                .iter()
                .map(|(q, w)| vec![q.to_string(), w.to_string()]),
        )?;
        files.push(path);
        plot.add(&rule.to_string(), curve.clone(), Marker::Line, i);
    }
    let svg = config.out.join("weight_curves.svg");
    write_text(&svg, &plot.render())?;
    files.push(svg);
    Ok(CurveSet {
        rules,
        curves,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::read_schema_csv;

    #[test]
    fn default_curves() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig {
            out: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        config.weight_curves.grid_points = 999;
        let set = run_weight_curves(&config).unwrap();
        assert_eq!(set.files.len(), 4);
        let (header, rows) = read_schema_csv(
            &dir.path().join("weight_curve_infosft_0.93.csv"),
            "weight-curve",
        )
        .unwrap();
        assert_eq!(header, ["q", "w"]);
        assert_eq!(rows.len(), 999);
        assert!(set.curves[0].iter().all(|&(_, w)| w == 1.0));
        assert!(set.curves[1].iter().all(|&(q, w)| w == q));
    }

    #[test]
    fn empty_rule_list_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig {
            out: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        config.weight_curves.rules.clear();
        assert!(matches!(run_weight_curves(&config), Err(Error::Config(_))));
    }

    #[test]
    fn narrow_support() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig {
            out: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        config.weight_curves.rules = vec!["infosft(0.5)".into()];
        config.weight_curves.grid_points = 99;
        let set = run_weight_curves(&config).unwrap();
        for &(q, w) in &set.curves[0] {
            assert_eq!(w > 0.0, q < 0.5, "q = {q}");
        }
    }
}
