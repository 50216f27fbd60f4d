use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecgtize::completion::CompletionMode;
use ecgtize::layout::LayoutSpec;
use ecgtize::lead::Lead;
use ecgtize::pdf::write_scene;
use ecgtize::recordio::{read_record, write_record, RecordFormat};
use ecgtize::render::{render_page, render_scene, NoiseStyle, RenderStyle};
use ecgtize::synth::{synth_record, SynthConfig};

mod batch;
mod config;
mod evaluate;

use config::{load_layout_file, PageFlags, RunConfig, RunFlags};

/// Paper ECG digitization
#[derive(Parser)]
#[command(name = "ecgtize", version)]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Turn ECG pages (PDF, PNG, JPEG) into records
    Digitize {
        /// Page files or directories of pages
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        page: PageFlags,
    },
    /// Fill the unobserved samples of existing records
    Complete {
        /// Record files or directories of records
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Compare digitized records with references of the same file stem
    Evaluate {
        /// Directory of digitized records
        #[arg(long)]
        digitized: PathBuf,
        /// Directory of reference records
        #[arg(long)]
        reference: PathBuf,
        /// Directory for metrics.csv and features.csv
        #[arg(short, long)]
        out: PathBuf,
        /// Soft-DTW smoothing
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Skip soft-DTW (quadratic in record length)
        #[arg(long)]
        no_sdtw: bool,
        /// Lead used for fiducial features
        #[arg(long, default_value = "II")]
        feature_lead: Lead,
        #[arg(short, long, default_value_t = 0)]
        jobs: usize,
    },
    /// Draw a record as a paper ECG page (.png, .jpg or .pdf)
    Render(RenderArgs),
    /// Write synthetic reference records and, optionally, their rendered pages
    Synth {
        /// Directory for reference records
        #[arg(short, long)]
        out: PathBuf,
        /// Directory for rendered pages
        #[arg(long)]
        pages: Option<PathBuf>,
        /// Page file type: pdf or png
        #[arg(long, default_value = "pdf")]
        page_format: String,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "xml")]
        format: RecordFormat,
        #[command(flatten)]
        style: StyleArgs,
    },
}

#[derive(Args)]
struct RenderArgs {
    /// Record file (.xml or .csv)
    input: PathBuf,
    /// Output page
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    style: StyleArgs,
}

#[derive(Args)]
struct StyleArgs {
    /// Page layout: 3x4, 3x4-transposed or 2x6
    #[arg(long, default_value = "3x4")]
    layout: String,
    /// TOML lead-grid description; overrides --layout
    #[arg(long)]
    layout_file: Option<PathBuf>,
    /// TOML render style
    #[arg(long)]
    style_file: Option<PathBuf>,
    #[arg(long)]
    dpi: Option<u32>,
    /// Add Gaussian pixel noise and speckle to raster output
    #[arg(long)]
    noise: bool,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Header line printed in the top margin (repeatable)
    #[arg(long)]
    header: Vec<String>,
    #[arg(long)]
    no_labels: bool,
    #[arg(long)]
    no_grid: bool,
}

impl StyleArgs {
    fn resolve(&self) -> Result<(LayoutSpec, RenderStyle)> {
        let layout = match &self.layout_file {
            Some(p) => load_layout_file(p)?,
            None => LayoutSpec::named(&self.layout).with_context(|| format!("--layout {}", self.layout))?,
        };
        let mut style = match &self.style_file {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RenderStyle::from_toml(&text).with_context(|| format!("style file {}", p.display()))?
            }
            None => RenderStyle::default(),
        };
        if let Some(dpi) = self.dpi {
            style.dpi = dpi;
        }
        if self.noise {
            style.noise = Some(NoiseStyle {
                seed: self.noise_seed,
                ..style.noise.unwrap_or_default()
            });
        }
        if !self.header.is_empty() {
            style.header = self.header.clone();
        }
        style.labels &= !self.no_labels;
        style.grid &= !self.no_grid;
        style.validate()?;
        Ok((layout, style))
    }
}

/// Exit status classes: 2 for bad configuration, 3 when nothing succeeded.
enum Failure {
    Config(anyhow::Error),
    Total(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Total(_) => 3,
        }
    }
}

fn config_err(e: anyhow::Error) -> Failure {
    Failure::Config(e)
}

fn total_err(e: anyhow::Error) -> Failure {
    Failure::Total(e)
}

fn save_page(path: &Path, record: &ecgtize::record::EcgRecord, layout: &LayoutSpec, style: &RenderStyle) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pdf" => {
            let scene = render_scene(record, layout, style)?;
            fs::write(path, write_scene(&scene)).with_context(|| format!("writing {}", path.display()))?;
        }
        "png" => render_page(record, layout, style)?.save_png(path)?,
        "jpg" | "jpeg" => render_page(record, layout, style)?.save_jpeg(path, 92)?,
        _ => bail!("cannot tell the page format of {} (use .pdf, .png or .jpg)", path.display()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Digitize { inputs, run, page } => {
            let cfg = RunConfig::resolve(&run, &page, CompletionMode::Off).map_err(config_err)?;
            let inputs = batch::collect_inputs(&inputs, batch::PAGE_EXTENSIONS).map_err(config_err)?;
            let summary = batch::digitize_all(&inputs, &cfg).map_err(total_err)?;
            println!("{}", summary.line("digitized"));
            if summary.ok == 0 {
                return Err(Failure::Total(anyhow::anyhow!("no page was digitized")));
            }
        }
        Cmd::Complete { inputs, run } => {
            let cfg = RunConfig::resolve(&run, &PageFlags::default(), CompletionMode::Tiled).map_err(config_err)?;
            let inputs = batch::collect_inputs(&inputs, batch::RECORD_EXTENSIONS).map_err(config_err)?;
            let summary = batch::complete_all(&inputs, &cfg).map_err(total_err)?;
            println!("{}", summary.line("completed"));
            if summary.ok == 0 {
                return Err(Failure::Total(anyhow::anyhow!("no record was completed")));
            }
        }
        Cmd::Evaluate {
            digitized,
            reference,
            out,
            gamma,
            no_sdtw,
            feature_lead,
            jobs,
        } => {
            if !(gamma > 0.0) {
                return Err(config_err(anyhow::anyhow!("--gamma must be positive")));
            }
            for dir in [&digitized, &reference] {
                if !dir.is_dir() {
                    return Err(config_err(anyhow::anyhow!("{} is not a directory", dir.display())));
                }
            }
            let opts = evaluate::EvalOptions {
                digitized,
                reference,
                out_dir: out,
                gamma: (!no_sdtw).then_some(gamma),
                feature_lead,
                jobs,
            };
            let summary = evaluate::run(&opts).map_err(total_err)?;
            println!("{}", summary.line());
            if summary.failed == summary.pairs {
                return Err(Failure::Total(anyhow::anyhow!("no pair could be read")));
            }
        }
        Cmd::Render(args) => {
            let (layout, style) = args.style.resolve().map_err(config_err)?;
            let record = read_record(&args.input).map_err(|e| total_err(e.into()))?;
            save_page(&args.out, &record, &layout, &style).map_err(total_err)?;
        }
        Cmd::Synth {
            out,
            pages,
            page_format,
            count,
            seed,
            format,
            style,
        } => {
            let (layout, style) = style.resolve().map_err(config_err)?;
            if !matches!(page_format.as_str(), "pdf" | "png") {
                return Err(config_err(anyhow::anyhow!("--page-format must be pdf or png")));
            }
            let make = || -> Result<()> {
                fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
                if let Some(p) = &pages {
                    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
                }
                for i in 0..count {
                    let s = synth_record(seed + i, &SynthConfig::default());
                    let name = format!("ecg_{:04}", seed + i);
                    write_record(&out.join(format!("{name}.{}", format.extension())), &s.record, format, false)?;
                    if let Some(p) = &pages {
                        save_page(&p.join(format!("{name}.{page_format}")), &s.record, &layout, &style)?;
                    }
                }
                Ok(())
            };
            make().map_err(total_err)?;
            println!("wrote {count} synthetic records");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Total(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
