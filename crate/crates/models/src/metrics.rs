use neuroarm_core::ClassLabel;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[ClassLabel]) -> Self {
        Self { classes: classes.to_vec(), counts: vec![vec![0; classes.len()]; classes.len()] }
    }

    pub fn from_pairs(classes: &[ClassLabel], truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / n as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in &self.classes {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(s, "{c}").unwrap();
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn render(&self, title: &str) -> String {
        let mut s = format!("{title} (accuracy {:.3})\n", self.accuracy());
        write!(s, "{:>8}", "").unwrap();
        for c in &self.classes {
            write!(s, "{:>8}", c.as_str()).unwrap();
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(s, "{:>8}", c.as_str()).unwrap();
            for v in row {
                write!(s, "{v:>8}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}
