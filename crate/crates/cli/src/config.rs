//! Run configuration: command-line flags over a TOML file over defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use ecgtize::completion::{Backend, BackendConfig, CompletionMode};
use ecgtize::extract::Method;
use ecgtize::layout::LayoutSpec;
use ecgtize::raster::{DEFAULT_DPI, MAX_DPI, MIN_DPI};
use ecgtize::recordio::RecordFormat;
use ecgtize::textscrub::OcrMode;

/// Keys accepted in a `--config` file. All optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<String>,
    pub layout: Option<String>,
    pub layout_file: Option<PathBuf>,
    pub dpi: Option<u32>,
    pub ocr: Option<String>,
    pub ocr_cmd: Option<String>,
    pub completion: Option<String>,
    pub backend_addr: Option<String>,
    pub backend_timeout_s: Option<u64>,
    pub anonymize: Option<bool>,
    pub format: Option<String>,
    pub jobs: Option<usize>,
    pub dump_bands: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by `digitize` and `complete`.
#[derive(Debug, Default, Args)]
pub struct RunFlags {
    /// TOML file with defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Signal completion: off, algebra, tiled or backend
    #[arg(long)]
    pub completion: Option<String>,
    /// Completion backend: host:port, or exec:<command line> for a child process
    #[arg(long)]
    pub backend_addr: Option<String>,
    /// Leave page text out of written records
    #[arg(long)]
    pub anonymize: bool,
    /// Record format: xml or csv
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads (0 = one per core)
    #[arg(short, long)]
    pub jobs: Option<usize>,
}

/// Flags only `digitize` takes.
#[derive(Debug, Default, Args)]
pub struct PageFlags {
    /// Extraction algorithm: full, fragmented or lazy
    #[arg(long)]
    pub method: Option<String>,
    /// Page layout: 3x4, 3x4-transposed, 2x6 or auto
    #[arg(long)]
    pub layout: Option<String>,
    /// TOML lead-grid description; overrides --layout
    #[arg(long)]
    pub layout_file: Option<PathBuf>,
    /// Rasterization resolution for PDF input
    #[arg(long)]
    pub dpi: Option<u32>,
    /// Text detection: off, heuristic or external
    #[arg(long)]
    pub ocr: Option<String>,
    /// External OCR command; the page PNG path is appended
    #[arg(long)]
    pub ocr_cmd: Option<String>,
    /// Also write <stem>.bands.csv with the detected trace bands
    #[arg(long)]
    pub dump_bands: bool,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub method: Method,
    /// `None` picks the layout from the number of bands found.
    pub layout: Option<LayoutSpec>,
    pub dpi: u32,
    pub ocr: OcrMode,
    pub ocr_cmd: Option<String>,
    pub completion: CompletionMode,
    pub backend: Option<BackendConfig>,
    pub anonymize: bool,
    pub format: RecordFormat,
    pub jobs: usize,
    pub dump_bands: bool,
    pub out_dir: PathBuf,
}

fn parse<T: std::str::FromStr>(what: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow::anyhow!("--{what}: {e}"))
}

fn layout_from_name(name: &str) -> Result<Option<LayoutSpec>> {
    if name.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    Ok(Some(LayoutSpec::named(name).with_context(|| format!("--layout {name}"))?))
}

pub fn load_layout_file(path: &Path) -> Result<LayoutSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading layout file {}", path.display()))?;
    LayoutSpec::from_toml(&text).with_context(|| format!("layout file {}", path.display()))
}

impl RunConfig {
    /// Resolves every setting and checks it; nothing is written here.
    pub fn resolve(run: &RunFlags, page: &PageFlags, default_completion: CompletionMode) -> Result<Self> {
        let file = match &run.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let pick = |cli: &Option<String>, cfg: &Option<String>| cli.clone().or_else(|| cfg.clone());

        let method = match pick(&page.method, &file.method) {
            Some(m) => parse("method", &m)?,
            None => Method::default(),
        };
        let layout = if let Some(p) = &page.layout_file {
            Some(load_layout_file(p)?)
        } else if let Some(name) = &page.layout {
            layout_from_name(name)?
        } else if let Some(p) = &file.layout_file {
            Some(load_layout_file(p)?)
        } else if let Some(name) = &file.layout {
            layout_from_name(name)?
        } else {
            Some(LayoutSpec::standard_3x4())
        };
        let dpi = page.dpi.or(file.dpi).unwrap_or(DEFAULT_DPI);
        if !(MIN_DPI..=MAX_DPI).contains(&dpi) {
            bail!("--dpi {dpi} is outside {MIN_DPI}..={MAX_DPI}");
        }
        let ocr = match pick(&page.ocr, &file.ocr) {
            Some(m) => parse("ocr", &m)?,
            None => OcrMode::default(),
        };
        let completion = match pick(&run.completion, &file.completion) {
            Some(m) => parse("completion", &m)?,
            None => default_completion,
        };
        let backend = match pick(&run.backend_addr, &file.backend_addr) {
            Some(addr) => {
                let backend = Backend::parse(&addr).map_err(|e| anyhow::anyhow!("--backend-addr: {e}"))?;
                let mut cfg = BackendConfig::new(backend);
                if let Some(s) = file.backend_timeout_s {
                    cfg.timeout = Duration::from_secs(s.max(1));
                }
                Some(cfg)
            }
            None => None,
        };
        if completion == CompletionMode::Backend && backend.is_none() {
            bail!("--completion backend needs --backend-addr");
        }
        let format = match pick(&run.format, &file.format) {
            Some(f) => parse("format", &f)?,
            None => RecordFormat::default(),
        };
        let out_dir = run.out.clone().context("--out is required")?;
        Ok(RunConfig {
            method,
            layout,
            dpi,
            ocr,
            ocr_cmd: pick(&page.ocr_cmd, &file.ocr_cmd),
            completion,
            backend,
            anonymize: run.anonymize || file.anonymize.unwrap_or(false),
            format,
            jobs: run.jobs.or(file.jobs).unwrap_or(0),
            dump_bands: page.dump_bands || file.dump_bands.unwrap_or(false),
            out_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    fn run_flags(config: Option<PathBuf>) -> RunFlags {
        RunFlags {
            config,
            out: Some("out".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&run_flags(None), &PageFlags::default(), CompletionMode::Off).unwrap();
        assert_eq!(c.method, Method::Fragmented);
        assert_eq!(c.layout, Some(LayoutSpec::standard_3x4()));
        assert_eq!((c.dpi, c.ocr, c.completion, c.format), (300, OcrMode::Heuristic, CompletionMode::Off, RecordFormat::Xml));
        assert!(!c.anonymize);
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let f = write_config("method = \"lazy\"\ndpi = 200\nformat = \"csv\"\nanonymize = true\n");
        let page = PageFlags {
            method: Some("full".into()),
            ..Default::default()
        };
        let c = RunConfig::resolve(&run_flags(Some(f.path().into())), &page, CompletionMode::Off).unwrap();
        assert_eq!(c.method, Method::Full);
        assert_eq!(c.dpi, 200);
        assert_eq!(c.format, RecordFormat::Csv);
        assert!(c.anonymize);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let f = write_config("methd = \"lazy\"\n");
        assert!(RunConfig::resolve(&run_flags(Some(f.path().into())), &PageFlags::default(), CompletionMode::Off).is_err());
        let page = PageFlags {
            dpi: Some(10),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&run_flags(None), &page, CompletionMode::Off).is_err());
        let mut run = run_flags(None);
        run.completion = Some("backend".into());
        assert!(RunConfig::resolve(&run, &PageFlags::default(), CompletionMode::Off).is_err());
    }

    #[test]
    fn auto_layout_is_none() {
        let page = PageFlags {
            layout: Some("auto".into()),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(&run_flags(None), &page, CompletionMode::Off).unwrap().layout, None);
    }
}
