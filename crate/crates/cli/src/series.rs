//! The series CSV format.
//!
//! ```text
//! # angle_unit: degrees
//! time,wind_dir,wave_dir,wind_speed
//! 1,270.0,255.5,6.1
//! ```
//!
//! The first three columns are the time index and the two angles; any
//! further columns are covariates. Comment lines start with `#`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use torhsmm::circular::{Angle, TorusPoint};
use torhsmm::dwell_hazard::Covariates;

use crate::failure::{Classify, Failure, Kind, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Radians,
    Degrees,
}

impl AngleUnit {
    fn bound(self) -> f64 {
        match self {
            AngleUnit::Radians => 2.0 * PI,
            AngleUnit::Degrees => 360.0,
        }
    }

    fn to_angle(self, v: f64) -> Angle {
        match self {
            AngleUnit::Radians => Angle::new(v),
            AngleUnit::Degrees => Angle::from_degrees(v),
        }
    }

    fn from_angle(self, a: Angle) -> f64 {
        match self {
            AngleUnit::Radians => a.radians(),
            AngleUnit::Degrees => a.degrees(),
        }
    }
}

impl FromStr for AngleUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "radians" | "rad" => Ok(AngleUnit::Radians),
            "degrees" | "deg" => Ok(AngleUnit::Degrees),
            other => Err(format!("unknown angle unit '{other}' (use radians or degrees)")),
        }
    }
}

impl fmt::Display for AngleUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AngleUnit::Radians => "radians",
            AngleUnit::Degrees => "degrees",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFile {
    pub unit: AngleUnit,
    pub time_name: String,
    pub angle_names: [String; 2],
    /// Time labels as written in the file.
    pub time: Vec<String>,
    pub y: Vec<TorusPoint>,
    pub covariate_names: Vec<String>,
    /// Row-major covariate values.
    pub covariates: Vec<Vec<f64>>,
}

fn parse_header_comment(line: &str) -> Option<(String, String)> {
    let body = line.trim_start().strip_prefix('#')?;
    let (key, value) = body.split_once(':')?;
    Some((key.trim().to_ascii_lowercase(), value.trim().to_string()))
}

impl SeriesFile {
    pub fn read(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path).or_fail(Kind::Data, format!("cannot read {}", path.display()))?;
        SeriesFile::parse(&text).map_err(|f| Failure {
            kind: f.kind,
            error: f.error.context(format!("in {}", path.display())),
        })
    }

    pub fn parse(text: &str) -> Outcome<Self> {
        let mut unit = None;
        for line in text.lines().take_while(|l| l.trim_start().starts_with('#') || l.trim().is_empty()) {
            if let Some((key, value)) = parse_header_comment(line) {
                if key == "angle_unit" {
                    unit = Some(value.parse::<AngleUnit>().map_err(Failure::data)?);
                }
            }
        }
        let unit = unit.ok_or_else(|| Failure::data("missing '# angle_unit: radians|degrees' header line"))?;

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().or_fail(Kind::Data, "cannot read the column header")?.clone();
        if header.len() < 3 {
            return Err(Failure::data(format!(
                "expected at least 3 columns (time, angle1, angle2), found {}",
                header.len()
            )));
        }
        let names: Vec<String> = header.iter().map(str::to_string).collect();

        let mut time = Vec::new();
        let mut y = Vec::new();
        let mut covariates = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Failure::data(format!("line {line}: {e}"))
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != names.len() {
                return Err(Failure::data(format!(
                    "line {line}: expected {} fields, found {}",
                    names.len(),
                    record.len()
                )));
            }
            let number = |j: usize| -> Outcome<f64> {
                let raw = &record[j];
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                    return Err(Failure::data(format!("line {line}: missing value in column '{}'", names[j])));
                }
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Failure::data(format!("line {line}: '{raw}' in column '{}' is not a number", names[j])))?;
                if !v.is_finite() {
                    return Err(Failure::data(format!("line {line}: non-finite value in column '{}'", names[j])));
                }
                Ok(v)
            };
            let mut angles = [0.0; 2];
            for (i, a) in angles.iter_mut().enumerate() {
                let v = number(i + 1)?;
                if v.abs() > unit.bound() {
                    let hint = match unit {
                        AngleUnit::Radians => "the values look like degrees; declare '# angle_unit: degrees'",
                        AngleUnit::Degrees => "angles in degrees must lie within [-360, 360]",
                    };
                    return Err(Failure::data(format!(
                        "line {line}: {} = {v} is out of range for {unit}; {hint}",
                        names[i + 1]
                    )));
                }
                *a = v;
            }
            y.push(TorusPoint {
                y1: unit.to_angle(angles[0]),
                y2: unit.to_angle(angles[1]),
            });
            covariates.push((3..names.len()).map(number).collect::<Outcome<Vec<f64>>>()?);
            time.push((record[0].to_string(), line));
        }
        if y.is_empty() {
            return Err(Failure::data("the series has no data rows"));
        }
        check_increasing(&time)?;
        Ok(SeriesFile {
            unit,
            time_name: names[0].clone(),
            angle_names: [names[1].clone(), names[2].clone()],
            time: time.into_iter().map(|(t, _)| t).collect(),
            y,
            covariate_names: names[3..].to_vec(),
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// Covariate table restricted to `selected` columns (all when `None`).
    pub fn covariate_table(&self, selected: Option<&[String]>) -> Outcome<(Vec<String>, Covariates)> {
        let columns: Vec<usize> = match selected {
            None => (0..self.covariate_names.len()).collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    self.covariate_names.iter().position(|c| c == n).ok_or_else(|| {
                        Failure::usage(format!(
                            "covariate '{n}' is not a column of the series (columns: {})",
                            self.covariate_names.join(", ")
                        ))
                    })
                })
                .collect::<Outcome<_>>()?,
        };
        let names = columns.iter().map(|&j| self.covariate_names[j].clone()).collect();
        if columns.is_empty() {
            return Ok((names, Covariates::empty(self.len())));
        }
        let rows: Vec<Vec<f64>> = self.covariates.iter().map(|r| columns.iter().map(|&j| r[j]).collect()).collect();
        Ok((names, Covariates::from_rows(&rows)?))
    }

    pub fn write(&self, path: &Path) -> Outcome<()> {
        let mut out = format!("# angle_unit: {}\n", self.unit);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.time_name.clone(), self.angle_names[0].clone(), self.angle_names[1].clone()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header).or_fail(Kind::Data, "cannot encode series")?;
        for (t, (label, p)) in self.time.iter().zip(&self.y).enumerate() {
            let mut row = vec![
                label.clone(),
                self.unit.from_angle(p.y1).to_string(),
                self.unit.from_angle(p.y2).to_string(),
            ];
            row.extend(self.covariates[t].iter().map(f64::to_string));
            w.write_record(&row).or_fail(Kind::Data, "cannot encode series")?;
        }
        let bytes = w.into_inner().or_fail(Kind::Data, "cannot encode series")?;
        out.push_str(&String::from_utf8(bytes).or_fail(Kind::Data, "cannot encode series")?);
        std::fs::write(path, out).or_fail(Kind::Data, format!("cannot write {}", path.display()))
    }
}

fn check_increasing(time: &[(String, u64)]) -> Outcome<()> {
    let numeric: Option<Vec<f64>> = time.iter().map(|(t, _)| t.parse::<f64>().ok()).collect();
    for i in 1..time.len() {
        let ok = match &numeric {
            Some(v) => v[i] > v[i - 1],
            None => time[i].0 > time[i - 1].0,
        };
        if !ok {
            return Err(Failure::data(format!(
                "line {}: time index '{}' does not increase after '{}'",
                time[i].1,
                time[i].0,
                time[i - 1].0
            )));
        }
    }
    Ok(())
}
