use boltzgain::config_io::{configure_threads, load_config, run_campaign, write_report};
use boltzgain::constants::{
    self, exponent_serde, solve_hls_exponents, BundleKind, ExponentBundle,
};
use boltzgain::extremals::{mm_fourier_sharpness, sharpness_sweep, MmConstant, DEFAULT_EPSILONS};
use boltzgain::kernels::{AngularKernel, PhiClass, RestitutionModel};
use boltzgain::quadrature::Estimate;
use boltzgain::verify::{qminus_counterexample, GridSpec};
use boltzgain::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "boltzgain", version, about = "Check Lebesgue-norm bounds for the Boltzmann gain operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign file and write report.csv, report.json and summary.json.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sphere_order: Option<usize>,
        /// Grid as `N,L`: N nodes per axis on [-L, L]^n.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<GridSpec>,
    },
    /// Print one constant as a CSV row.
    Constants(ConstantArgs),
    /// Print the sharpness sweep as CSV: eps, norm, constant, ratio.
    Sharpness {
        #[arg(long, default_value = "2", value_parser = parse_exponent)]
        p: f64,
        #[arg(long, default_value = "2", value_parser = parse_exponent)]
        q: f64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = Angular::Constant)]
        angular: Angular,
        /// Run the Fourier-side Maxwell-molecule sweep for C0 or C1 instead.
        #[arg(long, value_enum)]
        mm: Option<Mm>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Print truncations of the loss-operator counterexample as CSV.
    Counterexample {
        /// Increasing radii, each at least e; defaults to e^e, e^(e^2), e^(e^3).
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Young,
    Hls,
    PhiGain,
    PhiLoss,
    Imw,
    Isw,
    Sharp,
    MmC0,
    MmC1,
}

#[derive(Clone, Copy, ValueEnum)]
enum Angular {
    Constant,
    OneMinusS,
    OneMinusSSquared,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mm {
    C0,
    C1,
}

#[derive(Clone, Copy, ValueEnum)]
enum Class {
    Weak,
    Strong,
}

#[derive(clap::Args)]
struct ConstantArgs {
    #[arg(long, value_enum)]
    kind: Which,
    #[arg(long, default_value = "1", value_parser = parse_exponent)]
    p: f64,
    #[arg(long, default_value = "1", value_parser = parse_exponent)]
    q: f64,
    #[arg(long, default_value = "1", value_parser = parse_exponent)]
    r: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Angular::Constant)]
    angular: Angular,
    /// Constant restitution coefficient; elastic when absent.
    #[arg(long)]
    e: Option<f64>,
    /// Viscoelastic restitution parameter.
    #[arg(long, conflicts_with = "e")]
    viscoelastic: Option<f64>,
    /// Integrability exponent of Φ for phi-gain and phi-loss.
    #[arg(long, value_parser = parse_exponent)]
    s: Option<f64>,
    #[arg(long, value_enum, default_value_t = Class::Strong)]
    class: Class,
    /// Weight parameter for imw and isw.
    #[arg(long)]
    a: Option<f64>,
}

fn parse_exponent(s: &str) -> std::result::Result<f64, String> {
    exponent_serde::parse(s)
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    let (n, l) = s.split_once(',').ok_or_else(|| format!("expected N,L, got `{s}`"))?;
    let size = n.trim().parse().map_err(|e| format!("grid size `{n}`: {e}"))?;
    let half_width = l.trim().parse().map_err(|e| format!("half width `{l}`: {e}"))?;
    Ok(GridSpec { size, half_width })
}

fn angular(a: Angular) -> Result<AngularKernel> {
    match a {
        Angular::Constant => AngularKernel::constant(1.0),
        Angular::OneMinusS => Ok(AngularKernel::one_minus_s()),
        Angular::OneMinusSSquared => Ok(AngularKernel::one_minus_s_squared()),
    }
}

fn fmt_exp(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        x.to_string()
    }
}

fn constants_row(args: &ConstantArgs) -> Result<(String, Estimate)> {
    let b = angular(args.angular)?;
    let rest = match (args.e, args.viscoelastic) {
        (Some(e), _) => RestitutionModel::new_constant(e)?,
        (None, Some(c)) => RestitutionModel::new_viscoelastic(c)?,
        (None, None) => RestitutionModel::Elastic,
    };
    let beta0 = rest.beta0();
    let class = match args.class {
        Class::Weak => PhiClass::Weak,
        Class::Strong => PhiClass::Strong,
    };
    let need_s = || args.s.ok_or_else(|| Error::InvalidArgument("--s is required for this kind".into()));
    let need_a = || args.a.ok_or_else(|| Error::InvalidArgument("--a is required for this kind".into()));
    let need_beta = || {
        rest.constant_beta().ok_or_else(|| Error::InvalidArgument("this kind needs a constant restitution".into()))
    };
    let mut bundle = ExponentBundle::young(args.p, args.q, args.r, args.alpha, args.lambda, args.n);
    let out = match args.kind {
        Which::Young => ("young", constants::young_constant(&bundle, &b, beta0)?),
        Which::Hls => {
            bundle.kind = BundleKind::Hls;
            ("hls_d", constants::hls_constant_d(&solve_hls_exponents(&bundle)?, &b, beta0)?)
        }
        Which::PhiGain => {
            bundle.kind = BundleKind::PhiGain { s: need_s()?, class };
            let sol = solve_hls_exponents(&bundle)?;
            ("phi_gain", constants::phi_gain_constant(&sol, &b, beta0, class, need_s()?)?)
        }
        Which::PhiLoss => {
            bundle.kind = BundleKind::PhiLoss { s: need_s()?, class };
            ("phi_loss", constants::phi_loss_constant(&bundle, &b)?)
        }
        Which::Imw => ("imw", constants::imw_constant(&bundle, &b, beta0, need_a()?)?),
        Which::Isw => {
            let a = need_a()?;
            if args.p.is_infinite() && args.q == 1.0 && args.r.is_infinite() {
                ("isw", constants::isw_constant(args.n, args.lambda, a, &b, &rest)?)
            } else {
                ("isw_general", constants::isw_constant_general(&bundle, a, &b, &rest)?)
            }
        }
        Which::Sharp => {
            ("sharp_const_beta", constants::sharp_constant_const_beta(args.p, args.q, args.alpha, args.n, &b, need_beta()?)?)
        }
        Which::MmC0 => ("mm_c0", constants::mm_sharp_constants(args.n, &b, need_beta()?)?.0),
        Which::MmC1 => ("mm_c1", constants::mm_sharp_constants(args.n, &b, need_beta()?)?.1),
    };
    Ok((out.0.to_string(), out.1))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify { config, out, seed, sphere_order, grid } => {
            configure_threads()?;
            let mut cfg = load_config(&config)?;
            cfg.apply_overrides(seed, sphere_order, grid);
            cfg.validate()?;
            let report = run_campaign(&cfg)?;
            write_report(&report, &out)?;
            let s = report.summary();
            for r in &report.records {
                let ratio = r.ratio.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
                println!("{:<8} {:<40} ratio {ratio}", r.status.to_string(), r.case_id);
            }
            println!("{} cases: {} passed, {} failed, {} skipped", s.total, s.passed, s.failed, s.skipped);
            Ok(if report.any_failed() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Constants(args) => {
            let (name, est) = constants_row(&args)?;
            println!("p,q,r,alpha,lambda,n,constant,value,quad_err");
            println!(
                "{},{},{},{},{},{},{name},{:e},{:e}",
                fmt_exp(args.p),
                fmt_exp(args.q),
                fmt_exp(args.r),
                args.alpha,
                args.lambda,
                args.n,
                est.value,
                est.error
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sharpness { p, q, n, alpha, beta, angular: ang, mm, eps } => {
            let b = angular(ang)?;
            let eps = eps.unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
            let recs = match mm {
                Some(Mm::C0) => mm_fourier_sharpness(MmConstant::C0, &eps, &b, beta, n)?,
                Some(Mm::C1) => mm_fourier_sharpness(MmConstant::C1, &eps, &b, beta, n)?,
                None => sharpness_sweep(p, q, n, alpha, &b, beta, &eps)?,
            };
            println!("eps,norm,constant,ratio");
            for r in recs {
                println!("{:e},{:e},{:e},{:e}", r.eps, r.norm, r.constant, r.ratio);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Counterexample { radii, n } => {
            let e = std::f64::consts::E;
            let radii = radii.unwrap_or_else(|| vec![e.powf(e), e.powf(e * e), e.powf(e * e * e)]);
            println!("radius,value,closed_form");
            for pt in qminus_counterexample(&radii, n)? {
                println!("{:e},{:e},{:e}", pt.radius, pt.value, pt.closed_form);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
