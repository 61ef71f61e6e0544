//! `--merit` flag grammar: `name[:value]` or a JSON merit object.

use dfrc_core::merit::{BuiltinGamma, MeritSpec};
use dfrc_core::scenario::config::PerSubcarrier;

use crate::CliError;

pub fn parse_merit(arg: &str) -> Result<MeritSpec, CliError> {
    let arg = arg.trim();
    if arg.starts_with('{') {
        return serde_json::from_str(arg).map_err(|e| CliError::Merit(e.to_string()));
    }
    let (name, value) = match arg.split_once(':') {
        Some((n, v)) => (n, Some(v)),
        None => (arg, None),
    };
    let num = |what: &str| -> Result<f64, CliError> {
        let v = value.ok_or_else(|| CliError::Merit(format!("`{name}` needs a value ({what}), e.g. {name}:0.5")))?;
        v.parse()
            .map_err(|_| CliError::Merit(format!("`{v}` is not a number")))
    };
    let opt = |default: f64| -> Result<f64, CliError> {
        match value {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::Merit(format!("`{v}` is not a number"))),
        }
    };
    let weights = None;
    Ok(match name {
        "arithmetic" => MeritSpec::PowerMean { p: 1.0, weights },
        "geometric" => MeritSpec::PowerMean { p: 0.0, weights },
        "harmonic" => MeritSpec::PowerMean { p: -1.0, weights },
        "power-mean" => MeritSpec::PowerMean { p: num("p")?, weights },
        "exp-mean" => MeritSpec::QuasiArithmetic {
            generator: BuiltinGamma::ExpMean { a: num("a")? },
            weights,
        },
        "radical-mean" => MeritSpec::QuasiArithmetic {
            generator: BuiltinGamma::RadicalMean { a: num("a")? },
            weights,
        },
        "mutual-info" => MeritSpec::MutualInfo { weights },
        "fisher-info" => MeritSpec::FisherInfo { weights },
        "detection" => MeritSpec::DetectionProb {
            pfa: PerSubcarrier::Scalar(opt(1e-4)?),
            weights,
        },
        "relative-entropy" => MeritSpec::RelativeEntropy {
            omega: PerSubcarrier::Scalar(opt(0.0)?),
            weights,
        },
        other => return Err(CliError::Merit(format!("unknown merit `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_values() {
        assert_eq!(parse_merit("arithmetic").unwrap(), MeritSpec::PowerMean { p: 1.0, weights: None });
        assert_eq!(parse_merit("power-mean:-20").unwrap(), MeritSpec::PowerMean { p: -20.0, weights: None });
        assert!(matches!(
            parse_merit("detection").unwrap(),
            MeritSpec::DetectionProb { pfa: PerSubcarrier::Scalar(p), .. } if p == 1e-4
        ));
        assert!(matches!(
            parse_merit("exp-mean:0.5").unwrap(),
            MeritSpec::QuasiArithmetic { generator: BuiltinGamma::ExpMean { a }, .. } if a == 0.5
        ));
    }

    #[test]
    fn json_form() {
        let m = parse_merit(r#"{"kind": "relative-entropy", "omega": 0.1}"#).unwrap();
        assert_eq!(
            m,
            MeritSpec::RelativeEntropy {
                omega: PerSubcarrier::Scalar(0.1),
                weights: None
            }
        );
    }

    #[test]
    fn rejects_unknown_and_missing_values() {
        assert!(parse_merit("median").is_err());
        assert!(parse_merit("power-mean").is_err());
        assert!(parse_merit("power-mean:x").is_err());
    }
}
