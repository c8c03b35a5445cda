//! Plot-ready CSV series. Nothing here draws; any plotting tool can read the files.

use std::str::FromStr;

use crate::{CliError, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    COfEps,
    CPrimeOfEps,
    HbarOfP,
    OneSided,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::COfEps => "c_of_eps",
            PlotKind::CPrimeOfEps => "c_prime_of_eps",
            PlotKind::HbarOfP => "hbar_of_p",
            PlotKind::OneSided => "one_sided",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            PlotKind::COfEps => &["eps", "c"],
            PlotKind::CPrimeOfEps => &["eps", "c_prime"],
            PlotKind::HbarOfP => &["p", "hbar"],
            PlotKind::OneSided => &["p", "dminus", "dplus"],
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [PlotKind::COfEps, PlotKind::CPrimeOfEps, PlotKind::HbarOfP, PlotKind::OneSided]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown plot kind `{s}`")))
    }
}

/// CSV text with the kind's header; every row must match its width.
pub fn render(kind: PlotKind, rows: &[Vec<f64>]) -> Result<String, CliError> {
    let header = kind.header();
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(CliError::Validation(format!(
                "{} rows have {} columns, got {}",
                kind.name(),
                header.len(),
                row.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    Ok(text)
}

/// Writes `<kind>.csv` into the run directory.
pub fn emit_plotdata(dir: &mut RunDir, kind: &str, rows: &[Vec<f64>]) -> Result<String, CliError> {
    let kind: PlotKind = kind.parse()?;
    let name = kind.file_name();
    dir.write(&name, render(kind, rows)?.as_bytes())?;
    Ok(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_and_rows() {
        let text = render(PlotKind::COfEps, &[vec![0.1, -0.25], vec![0.05, -0.3]]).unwrap();
        assert_eq!(text, "eps,c\n0.1,-0.25\n0.05,-0.3\n");
        assert_eq!(render(PlotKind::OneSided, &[]).unwrap(), "p,dminus,dplus\n");
        assert!(render(PlotKind::HbarOfP, &[vec![1.0]]).is_err());
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!("c_of_p".parse::<PlotKind>().is_err());
        assert_eq!("hbar_of_p".parse::<PlotKind>().unwrap(), PlotKind::HbarOfP);
    }
}
