use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::learn::{learn_mtheory, mean_sd, LearnOptions};
use crate::mapper::{apply_rule, build_initial_mtheory, parse_rules, plan_join, prepare_rule_database};
use crate::mtheory::{Csd, MTheory};
use crate::relational::{er_normalize, AttrKind, AttributeSpec, Database, RelationInstance, RelationSchema, Value};
use crate::script::format_number as num;
use crate::ssbn::{ground, infer, Component, EntityInstanceSet, Evidence, Network, QueryResult};

use super::{crps_gaussian, crps_mixture, mae, Criteria, CriterionResult, EvalError, Scores};

/// Rules for the heater model: energy from the sensed input temperature, cost from
/// energy, and the case total from its slabs.
pub const HEATER_RULES: &str = "\
causal(Slab.SensedInputTemp -> Slab.Energy) family=clg
causal(Slab.Energy -> Slab.Cost) family=clg
causal(Slab.Cost -> Case.TotalCost) family=clg agg=sum
";

#[derive(Debug, Clone, PartialEq)]
pub struct HeaterConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub slabs_per_case: usize,
    pub sensor_variance: f64,
    pub target_temp: f64,
    /// kg; recorded in the report, the energy constant already assumes it.
    pub slab_mass: f64,
    /// kWh per °C of heating for one slab.
    pub energy_per_degree: f64,
    pub cost_per_kwh: f64,
    pub input_temp_mean: f64,
    pub input_temp_sd: f64,
    pub seed: u64,
}

impl Default for HeaterConfig {
    fn default() -> Self {
        HeaterConfig {
            n_train: 1000,
            n_test: 100,
            slabs_per_case: 3,
            sensor_variance: 3.0,
            target_temp: 1200.0,
            slab_mass: 100.0,
            energy_per_degree: 0.013,
            cost_per_kwh: 0.20,
            input_temp_mean: 900.0,
            input_temp_sd: 50.0,
            seed: 42,
        }
    }
}

impl HeaterConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let reals = [
            ("sensor_variance", self.sensor_variance),
            ("target_temp", self.target_temp),
            ("slab_mass", self.slab_mass),
            ("energy_per_degree", self.energy_per_degree),
            ("cost_per_kwh", self.cost_per_kwh),
            ("input_temp_mean", self.input_temp_mean),
            ("input_temp_sd", self.input_temp_sd),
        ];
        for (name, x) in reals {
            if !(x > 0.0 && x.is_finite()) {
                return Err(EvalError::Config(format!("{name} must be positive, got {x}")));
            }
        }
        for (name, n) in [("n_train", self.n_train), ("n_test", self.n_test), ("slabs_per_case", self.slabs_per_case)] {
            if n == 0 {
                return Err(EvalError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn energy(&self, t_in: f64) -> f64 {
        self.energy_per_degree * (self.target_temp - t_in)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeaterData {
    /// Sensed temperatures with actuator energy and costs.
    pub train: Database,
    /// Sensed temperatures only.
    pub test: Database,
    /// Actual total cost per test case, in case order.
    pub test_totals: Vec<(String, f64)>,
}

fn attr(name: &str, kind: AttrKind) -> AttributeSpec {
    AttributeSpec::new(name, kind)
}

fn text(s: &str) -> Value {
    Value::Text(s.to_string())
}

fn keyed(name: &str, attrs: Vec<AttributeSpec>, pk: &[&str], rows: Vec<Vec<Value>>) -> RelationInstance {
    RelationInstance::new(
        RelationSchema::new(name, attrs, pk.iter().map(|s| s.to_string()).collect()),
        rows,
    )
}

fn slab_value(name: &str, unit: &str, rows: Vec<Vec<Value>>) -> RelationInstance {
    keyed(
        name,
        vec![attr("s", AttrKind::ForeignKey("Slab".into())), attr(name, AttrKind::Continuous(unit.into()))],
        &["s"],
        rows,
    )
}

struct Split {
    cases: Vec<Vec<Value>>,
    slabs: Vec<Vec<Value>>,
    sensed_in: Vec<Vec<Value>>,
    sensed_out: Vec<Vec<Value>>,
    energy: Vec<Vec<Value>>,
    cost: Vec<Vec<Value>>,
    totals: Vec<(String, f64)>,
}

fn simulate(cfg: &HeaterConfig, prefix: &str, n: usize, rng: &mut ChaCha8Rng) -> Split {
    let t_in = Normal::new(cfg.input_temp_mean, cfg.input_temp_sd).expect("valid sd");
    let noise = Normal::new(0.0, cfg.sensor_variance.sqrt()).expect("valid variance");
    let mut s = Split {
        cases: vec![],
        slabs: vec![],
        sensed_in: vec![],
        sensed_out: vec![],
        energy: vec![],
        cost: vec![],
        totals: vec![],
    };
    for c in 1..=n {
        let case = format!("{prefix}{c}");
        s.cases.push(vec![text(&case)]);
        let mut total = 0.0;
        for k in 1..=cfg.slabs_per_case {
            let slab = format!("{case}s{k}");
            let t = t_in.sample(rng);
            let energy = cfg.energy(t);
            let cost = cfg.cost_per_kwh * energy;
            total += cost;
            s.slabs.push(vec![text(&slab), text(&case)]);
            s.sensed_in.push(vec![text(&slab), Value::Real(t + noise.sample(rng))]);
            s.sensed_out.push(vec![text(&slab), Value::Real(cfg.target_temp + noise.sample(rng))]);
            s.energy.push(vec![text(&slab), Value::Real(energy)]);
            s.cost.push(vec![text(&slab), Value::Real(cost)]);
        }
        s.totals.push((case, total));
    }
    s
}

fn database(s: Split, full: bool) -> Result<Database, EvalError> {
    let mut rels = vec![
        keyed("Case", vec![attr("CID", AttrKind::Key)], &["CID"], s.cases),
        keyed(
            "Slab",
            vec![attr("SID", AttrKind::Key), attr("CaseOf", AttrKind::ForeignKey("Case".into()))],
            &["SID"],
            s.slabs,
        ),
        slab_value("SensedInputTemp", "C", s.sensed_in),
        slab_value("SensedOutputTemp", "C", s.sensed_out),
    ];
    if full {
        let totals = s.totals.iter().map(|(c, t)| vec![text(c), Value::Real(*t)]).collect();
        rels.push(slab_value("Energy", "kWh", s.energy));
        rels.push(slab_value("Cost", "EUR", s.cost));
        rels.push(keyed(
            "TotalCost",
            vec![attr("c", AttrKind::ForeignKey("Case".into())), attr("TotalCost", AttrKind::Continuous("EUR".into()))],
            &["c"],
            totals,
        ));
    }
    Ok(Database::new(rels)?)
}

/// Simulates training and test cases. Each slab's actual input temperature is normal,
/// the actuator supplies exactly the energy to reach the target, and both temperature
/// sensors add zero-mean noise. Deterministic in the seed.
pub fn generate_heater_db(cfg: &HeaterConfig) -> Result<HeaterData, EvalError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = simulate(cfg, "c", cfg.n_train, &mut rng);
    let test = simulate(cfg, "q", cfg.n_test, &mut rng);
    let test_totals = test.totals.clone();
    Ok(HeaterData {
        train: database(train, true)?,
        test: database(test, false)?,
        test_totals,
    })
}

/// Climatological forecast: a normal fitted to the training totals.
pub fn baseline_forecast(train: &Database) -> Result<(f64, f64), EvalError> {
    let rel = train.require("TotalCost")?;
    let col = rel.column("TotalCost").expect("TotalCost column");
    let xs: Vec<f64> = rel.rows.iter().filter_map(|r| r[col].as_real()).collect();
    let (mean, sd) = mean_sd(&xs)?;
    Ok((mean, sd * sd))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseScore {
    pub case: String,
    pub mean: f64,
    pub variance: f64,
    pub actual: f64,
    pub crps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeaterReport {
    pub config: HeaterConfig,
    pub learned: MTheory,
    pub cases: Vec<CaseScore>,
    pub scores: Scores,
    pub baseline: (f64, f64),
    pub baseline_crps: f64,
    /// Learned coefficient of Cost on Energy.
    pub cost_slope: Option<f64>,
    /// Learned variance of the sensed output temperature, whose actual value is fixed.
    pub sensor_variance: Option<f64>,
    pub criteria: Vec<CriterionResult>,
}

impl HeaterReport {
    pub fn average_crps(&self) -> f64 {
        self.scores.avg_crps.unwrap_or(f64::NAN)
    }

    pub fn slope_error(&self) -> Option<f64> {
        self.cost_slope.map(|s| (s - self.config.cost_per_kwh).abs() / self.config.cost_per_kwh)
    }

    pub fn sensor_error(&self) -> Option<f64> {
        self.sensor_variance.map(|v| (v - self.config.sensor_variance).abs() / self.config.sensor_variance)
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    /// `case,mean,variance,actual,crps`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,mean,variance,actual,crps\n");
        for c in &self.cases {
            out.push_str(&format!("{},{},{},{},{}\n", c.case, num(c.mean), num(c.variance), num(c.actual), num(c.crps)));
        }
        out
    }
}

impl fmt::Display for HeaterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "heater experiment: {} training cases, {} test cases, {} slabs of {} kg each, seed {}",
            c.n_train, c.n_test, c.slabs_per_case, num(c.slab_mass), c.seed
        )?;
        writeln!(f, "average CRPS          {}", num(self.average_crps()))?;
        writeln!(f, "MAE                   {}", num(self.scores.mae.unwrap_or(f64::NAN)))?;
        writeln!(
            f,
            "baseline average CRPS {} (N({}, {}))",
            num(self.baseline_crps),
            num(self.baseline.0),
            num(self.baseline.1)
        )?;
        let opt = |x: Option<f64>| x.map_or("n/a".to_string(), num);
        writeln!(
            f,
            "cost per kWh          learned {} generating {} (relative error {})",
            opt(self.cost_slope),
            num(c.cost_per_kwh),
            opt(self.slope_error())
        )?;
        writeln!(
            f,
            "sensor variance       learned {} generating {} (relative error {})",
            opt(self.sensor_variance),
            num(c.sensor_variance),
            opt(self.sensor_error())
        )?;
        for r in &self.criteria {
            writeln!(
                f,
                "criterion {:<24} value {:<14} {}",
                r.criterion.to_string(),
                opt(r.value),
                if r.pass { "pass" } else { "fail" }
            )?;
        }
        Ok(())
    }
}

fn cost_slope(m: &MTheory) -> Option<f64> {
    let cld = m.resident("Cost")?.inline_cld()?;
    let Csd::LinearGaussian(l) = cld.csds().find(|c| matches!(c, Csd::LinearGaussian(l) if !l.terms.is_empty()))? else {
        return None;
    };
    l.terms.iter().find(|t| t.parent == "Energy").map(|t| t.coefficient)
}

fn sensor_variance(m: &MTheory) -> Option<f64> {
    match &m.resident("SensedOutputTemp")?.inline_cld()?.default {
        Csd::LinearGaussian(l) if l.terms.is_empty() => Some(l.variance),
        _ => None,
    }
}

/// Generates data, maps and learns the model from the training set, then forecasts each
/// test case's total cost from its sensed temperatures and scores it.
pub fn run_heater_experiment(cfg: &HeaterConfig, rules: &str, criteria: &Criteria) -> Result<HeaterReport, EvalError> {
    let data = generate_heater_db(cfg)?;
    let db = er_normalize(&data.train)?;
    let rules = parse_rules(rules, &db)?;
    let db = prepare_rule_database(&db, &rules)?;
    let mut m = build_initial_mtheory(&db)?;
    for r in &rules {
        m = apply_rule(&m, r, &plan_join(r, &db)?)?;
    }
    let (learned, _) = learn_mtheory(&m, &db, &rules, &LearnOptions::default())?;

    let test = er_normalize(&data.test)?;
    let slab = test.require("Slab")?;
    let of = slab.column("CaseOf").expect("CaseOf column");
    let sin = slab.column("SensedInputTemp").expect("sensed input column");
    let sout = slab.column("SensedOutputTemp").expect("sensed output column");
    let mut cases = Vec::with_capacity(data.test_totals.len());
    for (case, actual) in &data.test_totals {
        let mut ents = EntityInstanceSet::new();
        ents.add("CASE", case)?;
        let mut ev = Evidence::new();
        for row in slab.rows.iter().filter(|r| r[of].to_string() == *case) {
            let s = row[0].to_string();
            ents.add("SLAB", &s)?;
            ev.set(format!("CaseOf_{s}"), case.clone());
            ev.set(format!("SensedInputTemp_{s}"), row[sin].to_string());
            ev.set(format!("SensedOutputTemp_{s}"), row[sout].to_string());
        }
        let query = format!("TotalCost_{case}");
        let ssbn = ground(&learned, &ents, &ev, &[&query])?;
        let net = Network::from_ssbn(&ssbn)?;
        let QueryResult::Continuous { components, mean, variance } = infer(&net, &query, &ev)? else {
            unreachable!("TotalCost is continuous")
        };
        let crps = match components.as_slice() {
            [Component { mean, variance, .. }] => crps_gaussian(*mean, *variance, *actual),
            _ => crps_mixture(&components, *actual),
        };
        cases.push(CaseScore {
            case: case.clone(),
            mean,
            variance,
            actual: *actual,
            crps,
        });
    }
    let n = cases.len() as f64;
    let means: Vec<f64> = cases.iter().map(|c| c.mean).collect();
    let actuals: Vec<f64> = cases.iter().map(|c| c.actual).collect();
    let scores = Scores {
        avg_crps: Some(cases.iter().map(|c| c.crps).sum::<f64>() / n),
        mae: Some(mae(&means, &actuals)?),
        brier: None,
    };
    let baseline = baseline_forecast(&data.train)?;
    let baseline_crps = actuals.iter().map(|y| crps_gaussian(baseline.0, baseline.1, *y)).sum::<f64>() / n;
    Ok(HeaterReport {
        config: cfg.clone(),
        cost_slope: cost_slope(&learned),
        sensor_variance: sensor_variance(&learned),
        learned,
        cases,
        criteria: criteria.check(&scores),
        scores,
        baseline,
        baseline_crps,
    })
}
