use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{LearnOptions, LearnResult};

/// Writes `node,pred,truth,value_0..value_{c-1}`; `truth` is left empty when unknown.
pub fn write_predictions_csv(result: &LearnResult, truth: Option<&[usize]>, mut out: impl Write) -> io::Result<()> {
    write!(out, "node,pred,truth")?;
    for l in 0..result.n_classes() {
        write!(out, ",value_{l}")?;
    }
    writeln!(out)?;
    for (i, row) in result.values.iter().enumerate() {
        write!(out, "{i},{}", result.predictions[i])?;
        match truth.and_then(|t| t.get(i)) {
            Some(t) => write!(out, ",{t}")?,
            None => write!(out, ",")?,
        }
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub residual: f64,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub fallback_nodes: usize,
    pub options: LearnOptions,
}

impl RunSummary {
    pub fn new(result: &LearnResult, options: LearnOptions) -> Self {
        Self {
            residual: result.residual,
            iterations: result.iterations,
            objective: result.objective,
            converged: result.converged,
            fallback_nodes: result.fallback_nodes.len(),
            options,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let r = LearnResult {
            values: vec![vec![1.0, 0.0], vec![0.25, 0.75]],
            predictions: vec![0, 1],
            residual: 0.0,
            iterations: 1,
            objective: 0.5,
            objective_traces: Vec::new(),
            converged: true,
            fallback_nodes: Vec::new(),
            p: 2.0,
        };
        let mut buf = Vec::new();
        write_predictions_csv(&r, Some(&[0, 0]), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "node,pred,truth,value_0,value_1\n0,0,0,1,0\n1,1,0,0.25,0.75\n"
        );
        let s = RunSummary::new(&r, LearnOptions::default());
        let back: RunSummary = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
