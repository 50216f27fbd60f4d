//! Page layouts: how trace bands and their time windows map onto leads.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::lead::{Lead, RECORD_SAMPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayoutKind {
    /// Three trace rows of four 2.5 s windows.
    ThreeByFour,
    /// Six trace rows of two 5 s windows.
    TwoBySix,
}

impl LayoutKind {
    pub fn window_points(self) -> usize {
        match self {
            LayoutKind::ThreeByFour => 1_250,
            LayoutKind::TwoBySix => 2_500,
        }
    }

    pub fn windows_per_band(self) -> usize {
        RECORD_SAMPLES / self.window_points()
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutKind::ThreeByFour => "3x4",
            LayoutKind::TwoBySix => "2x6",
        })
    }
}

impl FromStr for LayoutKind {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "3x4" => Ok(LayoutKind::ThreeByFour),
            "2x6" => Ok(LayoutKind::TwoBySix),
            other => Err(LayoutError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("unknown layout kind {0:?} (expected 3x4 or 2x6)")]
    UnknownKind(String),
    #[error("band {band} has {found} windows, layout {kind} needs {expected}")]
    WindowCount {
        band: usize,
        kind: LayoutKind,
        found: usize,
        expected: usize,
    },
    #[error("lead {0} appears more than once in the lead grid")]
    DuplicateLead(Lead),
    #[error("lead {0} is missing from the lead grid")]
    MissingLead(Lead),
    #[error("invalid layout file: {0}")]
    Parse(String),
}

/// What a detected band carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BandRole<'a> {
    /// Consecutive windows of `window_points` samples, one lead each.
    Windows(&'a [Lead]),
    /// One lead printed over the full 10 s.
    Rhythm(Lead),
}

/// Mapping of trace bands and windows to leads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutSpec {
    pub kind: LayoutKind,
    pub window_points: usize,
    /// One entry per windowed band, top to bottom.
    pub lead_grid: Vec<Vec<Lead>>,
    /// Full-length leads printed below the windowed bands.
    pub rhythm_leads: Vec<Lead>,
}

impl LayoutSpec {
    /// Row-major 3x4 grid: I, aVR, V1, V4 on the top band; lead II rhythm strip.
    pub fn standard_3x4() -> Self {
        use Lead::*;
        LayoutSpec {
            kind: LayoutKind::ThreeByFour,
            window_points: 1_250,
            lead_grid: vec![
                vec![I, AVR, V1, V4],
                vec![II, AVL, V2, V5],
                vec![III, AVF, V3, V6],
            ],
            rhythm_leads: vec![II],
        }
    }

    /// Alternative 3x4 reading where leads fill the grid in storage order along each band.
    pub fn transposed_3x4() -> Self {
        use Lead::*;
        LayoutSpec {
            kind: LayoutKind::ThreeByFour,
            window_points: 1_250,
            lead_grid: vec![
                vec![I, II, III, AVR],
                vec![AVL, AVF, V1, V2],
                vec![V3, V4, V5, V6],
            ],
            rhythm_leads: vec![II],
        }
    }

    /// 2x6: limb leads in the first 5 s, precordial leads in the second.
    pub fn standard_2x6() -> Self {
        use Lead::*;
        LayoutSpec {
            kind: LayoutKind::TwoBySix,
            window_points: 2_500,
            lead_grid: vec![
                vec![I, V1],
                vec![II, V2],
                vec![III, V3],
                vec![AVR, V4],
                vec![AVL, V5],
                vec![AVF, V6],
            ],
            rhythm_leads: vec![II],
        }
    }

    pub fn preset(kind: LayoutKind) -> Self {
        match kind {
            LayoutKind::ThreeByFour => Self::standard_3x4(),
            LayoutKind::TwoBySix => Self::standard_2x6(),
        }
    }

    /// Named presets accepted on the command line.
    pub fn named(name: &str) -> Result<Self, LayoutError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "3x4" | "3x4-standard" => Ok(Self::standard_3x4()),
            "3x4-transposed" => Ok(Self::transposed_3x4()),
            "2x6" | "2x6-standard" => Ok(Self::standard_2x6()),
            other => Err(LayoutError::UnknownKind(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        let expected = self.kind.windows_per_band();
        let mut seen = HashSet::new();
        for (band, leads) in self.lead_grid.iter().enumerate() {
            if leads.len() != expected {
                return Err(LayoutError::WindowCount {
                    band,
                    kind: self.kind,
                    found: leads.len(),
                    expected,
                });
            }
            for &lead in leads {
                if !seen.insert(lead) {
                    return Err(LayoutError::DuplicateLead(lead));
                }
            }
        }
        for lead in Lead::ALL {
            if !seen.contains(&lead) {
                return Err(LayoutError::MissingLead(lead));
            }
        }
        Ok(())
    }

    /// Minimum and maximum number of trace bands a page in this layout shows.
    pub fn band_range(&self) -> (usize, usize) {
        let windowed = self.lead_grid.len();
        (windowed, windowed + self.rhythm_leads.len())
    }

    pub fn band_role(&self, band_index: usize) -> Option<BandRole<'_>> {
        if let Some(leads) = self.lead_grid.get(band_index) {
            return Some(BandRole::Windows(leads));
        }
        self.rhythm_leads
            .get(band_index - self.lead_grid.len())
            .map(|&l| BandRole::Rhythm(l))
    }

    /// Window index at which `lead` is printed in the grid.
    pub fn window_of(&self, lead: Lead) -> Option<usize> {
        self.lead_grid.iter().find_map(|band| band.iter().position(|&l| l == lead))
    }

    /// Pick a preset from the number of bands found on an unlabelled page.
    pub fn infer_from_band_count(count: usize) -> Option<Self> {
        match count {
            3 | 4 => Some(Self::standard_3x4()),
            6 | 7 => Some(Self::standard_2x6()),
            _ => None,
        }
    }

    /// Parse a TOML layout description.
    ///
    /// ```toml
    /// kind = "3x4"
    /// bands = [["I", "aVR", "V1", "V4"], ["II", "aVL", "V2", "V5"], ["III", "aVF", "V3", "V6"]]
    /// rhythm = ["II"]
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, LayoutError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            kind: String,
            bands: Vec<Vec<String>>,
            #[serde(default)]
            rhythm: Vec<String>,
        }
        let file: File = toml::from_str(text).map_err(|e| LayoutError::Parse(e.to_string()))?;
        let kind: LayoutKind = file.kind.parse()?;
        let parse = |s: &String| s.parse::<Lead>().map_err(|e| LayoutError::Parse(e.to_string()));
        let lead_grid = file
            .bands
            .iter()
            .map(|b| b.iter().map(parse).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let rhythm_leads = file.rhythm.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
        let spec = LayoutSpec {
            kind,
            window_points: kind.window_points(),
            lead_grid,
            rhythm_leads,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_every_lead_once() {
        for spec in [
            LayoutSpec::standard_3x4(),
            LayoutSpec::transposed_3x4(),
            LayoutSpec::standard_2x6(),
        ] {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn band_roles() {
        let spec = LayoutSpec::standard_3x4();
        assert_eq!(spec.band_range(), (3, 4));
        assert_eq!(
            spec.band_role(0),
            Some(BandRole::Windows(&[Lead::I, Lead::AVR, Lead::V1, Lead::V4][..]))
        );
        assert_eq!(spec.band_role(3), Some(BandRole::Rhythm(Lead::II)));
        assert_eq!(spec.band_role(4), None);
    }

    #[test]
    fn layout_file_parses_and_validates() {
        let text = r#"
kind = "3x4"
bands = [["I", "aVR", "V1", "V4"], ["II", "aVL", "V2", "V5"], ["III", "aVF", "V3", "V6"]]
rhythm = ["II"]
"#;
        assert_eq!(LayoutSpec::from_toml(text).unwrap(), LayoutSpec::standard_3x4());

        let missing = r#"
kind = "3x4"
bands = [["I", "aVR", "V1", "V4"], ["II", "aVL", "V2", "V5"], ["III", "aVF", "V3", "V3"]]
"#;
        assert!(matches!(
            LayoutSpec::from_toml(missing),
            Err(LayoutError::DuplicateLead(Lead::V3))
        ));
        assert!(LayoutSpec::from_toml("kind = \"3x4\"\nbands = []\nextra = 1").is_err());
    }
}
