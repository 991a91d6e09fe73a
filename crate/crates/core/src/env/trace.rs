use std::path::Path;

use super::{EnvConfig, TaskBatch};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceRecord {
    pub size: f64,
    pub purchase_price: f64,
    pub refresh_price: f64,
    pub aoi_cs: f64,
}

/// Exogenous inputs of a run: per-slot tasks and service attributes.
///
/// On disk this is `tasks.csv` (`slot,user,service,up,down,cycles`, one row
/// per slot and user, empty service when the user is idle) and
/// `services.csv` (`slot,service,size,purchase_price,refresh_price,aoi_cs,aoi_max`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub aoi_max: Vec<f64>,
    pub tasks: Vec<TaskBatch>,
    pub services: Vec<Vec<ServiceRecord>>,
}

fn num(field: Option<&str>, what: &str, row: usize) -> Result<f64, Error> {
    field
        .ok_or_else(|| Error::Trace(format!("row {row}: missing {what}")))?
        .parse()
        .map_err(|_| Error::Trace(format!("row {row}: bad {what}")))
}

fn index(field: Option<&str>, what: &str, row: usize) -> Result<usize, Error> {
    field
        .ok_or_else(|| Error::Trace(format!("row {row}: missing {what}")))?
        .parse()
        .map_err(|_| Error::Trace(format!("row {row}: bad {what}")))
}

impl Trace {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn check(&self, cfg: &EnvConfig) -> Result<(), Error> {
        if self.tasks.is_empty() || self.tasks.len() != self.services.len() {
            return Err(Error::Trace("task and service records differ in length".into()));
        }
        if self.tasks.len() < cfg.horizon {
            return Err(Error::Trace(format!(
                "{} slots recorded, horizon is {}",
                self.tasks.len(),
                cfg.horizon
            )));
        }
        if self.aoi_max.len() != cfg.num_services {
            return Err(Error::Trace("threshold count differs from num_services".into()));
        }
        for (t, (b, s)) in self.tasks.iter().zip(&self.services).enumerate() {
            if b.num_users() != cfg.num_users || b.num_services() != cfg.num_services || s.len() != cfg.num_services {
                return Err(Error::Trace(format!("slot {t}: shape differs from config")));
            }
            b.check().map_err(|e| Error::Trace(format!("slot {t}: {e}")))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(), Error> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("tasks.csv"))?;
        w.write_record(["slot", "user", "service", "up", "down", "cycles"])?;
        for (t, b) in self.tasks.iter().enumerate() {
            for i in 0..b.num_users() {
                match b.requested(i) {
                    Some(j) => w.write_record([
                        t.to_string(),
                        i.to_string(),
                        j.to_string(),
                        b.up[(i, j)].to_string(),
                        b.down[(i, j)].to_string(),
                        b.cycles[(i, j)].to_string(),
                    ])?,
                    None => w.write_record([
                        t.to_string(),
                        i.to_string(),
                        String::new(),
                        "0".into(),
                        "0".into(),
                        "0".into(),
                    ])?,
                }
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("services.csv"))?;
        w.write_record([
            "slot",
            "service",
            "size",
            "purchase_price",
            "refresh_price",
            "aoi_cs",
            "aoi_max",
        ])?;
        for (t, recs) in self.services.iter().enumerate() {
            for (j, r) in recs.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    j.to_string(),
                    r.size.to_string(),
                    r.purchase_price.to_string(),
                    r.refresh_price.to_string(),
                    r.aoi_cs.to_string(),
                    self.aoi_max[j].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(dir: &Path, users: usize, services: usize) -> Result<Self, Error> {
        let mut trace = Trace {
            aoi_max: vec![0.0; services],
            ..Trace::default()
        };
        let mut r = csv::Reader::from_path(dir.join("tasks.csv"))?;
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let t = index(rec.get(0), "slot", row)?;
            let i = index(rec.get(1), "user", row)?;
            if i >= users {
                return Err(Error::Trace(format!("row {row}: user {i} out of range")));
            }
            while trace.tasks.len() <= t {
                trace.tasks.push(TaskBatch::empty(users, services));
            }
            let svc = rec.get(2).unwrap_or("");
            if svc.is_empty() {
                continue;
            }
            let j = index(Some(svc), "service", row)?;
            if j >= services {
                return Err(Error::Trace(format!("row {row}: service {j} out of range")));
            }
            let b = &mut trace.tasks[t];
            b.up[(i, j)] = num(rec.get(3), "up", row)?;
            b.down[(i, j)] = num(rec.get(4), "down", row)?;
            b.cycles[(i, j)] = num(rec.get(5), "cycles", row)?;
        }
        let mut r = csv::Reader::from_path(dir.join("services.csv"))?;
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let t = index(rec.get(0), "slot", row)?;
            let j = index(rec.get(1), "service", row)?;
            if j >= services {
                return Err(Error::Trace(format!("row {row}: service {j} out of range")));
            }
            while trace.services.len() <= t {
                trace.services.push(vec![
                    ServiceRecord {
                        size: 0.0,
                        purchase_price: 0.0,
                        refresh_price: 0.0,
                        aoi_cs: 0.0,
                    };
                    services
                ]);
            }
            trace.services[t][j] = ServiceRecord {
                size: num(rec.get(2), "size", row)?,
                purchase_price: num(rec.get(3), "purchase_price", row)?,
                refresh_price: num(rec.get(4), "refresh_price", row)?,
                aoi_cs: num(rec.get(5), "aoi_cs", row)?,
            };
            trace.aoi_max[j] = num(rec.get(6), "aoi_max", row)?;
        }
        Ok(trace)
    }
}
