use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epimob::behavior::{discover_all, write_labels_csv, read_labels_csv, DiscoveryOptions};
use epimob::environment::EnvironmentConfig;
use epimob::mobility::{
    process_dataset, read_gps_csv, read_participants_csv, read_time_location_csv, write_gps_csv,
    write_participants_csv, write_time_location_csv, Gazetteer, MobilityParams, Place,
};
use epimob::sim::profiles::{synth_gps, ProfileSet};
use epimob::sim::{run_to_dir, Scenario};
use epimob::trajectory::{estimate_matrices, write_matrices, DayType, DurationModel, EstimateOptions, MatrixKey};
use epimob::Error;

#[derive(Parser)]
#[command(name = "epimob", version, about = "Mobility-driven epidemic simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// GPS traces → per-minute time-location CSV.
    Mobility {
        #[arg(long)]
        gps: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON summary of unknown regions and dropped days.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        min_pts: usize,
    },
    /// Time-location CSV → behavioural sub-class labels per day.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        /// CSV of participant_id,occupation.
        #[arg(long)]
        participants: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        self_similarity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time-location CSV (+ labels) → probability matrix files.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        participants: PathBuf,
        /// Sub-class labels from `cluster`; every day is sub-class 0 without.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Condition stay durations on the starting hour too.
        #[arg(long)]
        hourly: bool,
    },
    /// Schedule profiles → synthetic GPS traces, gazetteer and labels.
    Synth {
        #[arg(long)]
        profiles: PathBuf,
        /// Environment file supplying the location kinds.
        #[arg(long)]
        environment: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a scenario and write states.csv, events.jsonl, patches.csv, agents.jsonl.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Input and configuration problems exit 2; failures while running exit 3.
enum Failure {
    Config(Error),
    Runtime(Error),
}

type Outcome = std::result::Result<(), Failure>;

fn input<T>(r: epimob::Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn runtime<T>(r: epimob::Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn open(p: &Path) -> std::result::Result<BufReader<File>, Failure> {
    File::open(p).map(BufReader::new).map_err(|e| Failure::Config(Error::io(p, e)))
}

fn create(p: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(Error::io(dir, e)))?;
    }
    File::create(p).map(BufWriter::new).map_err(|e| Failure::Runtime(Error::io(p, e)))
}

fn read(p: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::Config(Error::io(p, e)))
}

fn write_json(p: &Path, v: &serde_json::Value) -> Outcome {
    let w = create(p)?;
    runtime(serde_json::to_writer_pretty(w, v).map_err(Error::from))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Mobility {
            gps,
            gazetteer,
            out,
            report,
            eps,
            min_pts,
        } => {
            let points = input(read_gps_csv(open(&gps)?))?;
            let gaz = input(Gazetteer::from_toml(&read(&gazetteer)?))?;
            let params = MobilityParams {
                eps_m: eps,
                min_pts,
                ..Default::default()
            };
            let res = input(process_dataset(points, &gaz, &params))?;
            runtime(write_time_location_csv(create(&out)?, &res.days, &res.labels))?;
            for (p, id, lat, lon) in &res.report.unknown_regions {
                log::warn!("{p}: stay region {id} at ({lat:.6}, {lon:.6}) matches no gazetteer entry");
            }
            if let Some(r) = report {
                write_json(
                    &r,
                    &serde_json::json!({
                        "days": res.days.len(),
                        "unknown_regions": res.report.unknown_regions,
                        "dropped_days": res.report.dropped_days.iter().map(|(p, d)| (p, d.to_string())).collect::<Vec<_>>(),
                    }),
                )?;
            }
            Ok(())
        }
        Cmd::Cluster {
            input: inp,
            participants,
            out,
            report,
            self_similarity,
            seed,
        } => {
            let (days, _) = input(read_time_location_csv(open(&inp)?))?;
            let occ = input(read_participants_csv(open(&participants)?))?;
            if !(0.0..=1.0).contains(&self_similarity) {
                return Err(Failure::Config(Error::config("--self-similarity", "must lie in [0, 1]")));
            }
            let opts = DiscoveryOptions { self_similarity, seed };
            let (labels, reports) = input(discover_all(&days, &occ, &opts))?;
            runtime(write_labels_csv(create(&out)?, &labels))?;
            for r in &reports {
                eprintln!("{}: {} days, mode {} (k = {})", r.class, r.n_days, r.selection.mode, r.selection.k);
            }
            if let Some(p) = report {
                write_json(&p, &runtime(serde_json::to_value(&reports).map_err(Error::from))?)?;
            }
            Ok(())
        }
        Cmd::Fit {
            input: inp,
            participants,
            labels,
            out_dir,
            alpha,
            hourly,
        } => {
            let (days, _) = input(read_time_location_csv(open(&inp)?))?;
            let occ = input(read_participants_csv(open(&participants)?))?;
            let labels = match labels {
                Some(p) => input(read_labels_csv(open(&p)?))?,
                None => BTreeMap::new(),
            };
            let mut groups: BTreeMap<MatrixKey, Vec<&[Place]>> = BTreeMap::new();
            for d in &days {
                let class = occ.get(&d.participant_id).ok_or_else(|| {
                    Failure::Config(Error::InvalidInput(format!("participant {} has no occupation", d.participant_id)))
                })?;
                let key = MatrixKey {
                    class: class.clone(),
                    subclass: labels.get(&(d.participant_id.clone(), d.day_index)).copied().unwrap_or(0),
                    day_type: DayType::of_day(d.day_index),
                };
                groups.entry(key).or_default().push(&d.places);
            }
            let opts = EstimateOptions {
                alpha,
                duration_model: if hourly { DurationModel::LocationHour } else { DurationModel::Location },
            };
            std::fs::create_dir_all(&out_dir).map_err(|e| Failure::Runtime(Error::io(&out_dir, e)))?;
            for (key, ds) in groups {
                let m = input(estimate_matrices(key.clone(), &ds, &opts))?;
                let path = out_dir.join(key.file_name());
                std::fs::write(&path, write_matrices(&m)).map_err(|e| Failure::Runtime(Error::io(&path, e)))?;
            }
            Ok(())
        }
        Cmd::Synth {
            profiles,
            environment,
            out,
            seed,
        } => {
            let prof = input(ProfileSet::from_toml(&read(&profiles)?))?;
            let env = input(EnvironmentConfig::from_toml(&read(&environment)?))?;
            let s = input(synth_gps(&prof, &env.kinds, seed))?;
            runtime(write_gps_csv(create(&out.join("gps.csv"))?, &s.points))?;
            std::fs::write(out.join("gazetteer.toml"), s.gazetteer.to_toml())
                .map_err(|e| Failure::Runtime(Error::io(out.join("gazetteer.toml"), e)))?;
            runtime(write_participants_csv(create(&out.join("participants.csv"))?, &s.participants))?;
            let mut w = create(&out.join("planted.csv"))?;
            use std::io::Write;
            let io = |e| Failure::Runtime(Error::io("planted.csv", e));
            writeln!(w, "participant_id,subclass").map_err(io)?;
            for (p, sub) in &s.planted {
                writeln!(w, "{p},{sub}").map_err(io)?;
            }
            w.flush().map_err(io)
        }
        Cmd::Simulate { scenario, out, threads } => {
            let scn = input(Scenario::load(&scenario))?;
            let go = || runtime(run_to_dir(&scn, &out));
            let summary = match threads {
                Some(n) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .map_err(|e| Failure::Config(Error::config("--threads", e.to_string())))?;
                    pool.install(go)?
                }
                None => go()?,
            };
            let (day, peak) = summary.peak_infectious();
            eprintln!(
                "{}: {} agents, {} days; peak infectious {peak} on day {day}; {} ever infected",
                scn.config.name,
                summary.population,
                scn.config.duration_days,
                summary.cumulative_infections()
            );
            Ok(())
        }
    }
}
