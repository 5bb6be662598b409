use std::fmt;

/// One PASS/FAIL line of `report.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.check, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<Line>,
}

impl Report {
    /// Adds a line; `detail` should carry the statistic, the tolerance and the seed.
    pub fn push(&mut self, check: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.lines.push(Line {
            check: check.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn extend(&mut self, other: Report) {
        self.lines.extend(other.lines);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}
