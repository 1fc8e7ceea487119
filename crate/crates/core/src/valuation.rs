//! Scoring several candidate datasets against one buyer and aggregating the
//! per-metric rankings.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSet;
use crate::protocol::{run_session, SessionConfig, ValuationReport};

/// Which end of a metric is preferable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    High,
    Low,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::High => Direction::Low,
            Direction::Low => Direction::High,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(Direction::High),
            "low" => Ok(Direction::Low),
            other => Err(Error::InvalidArgument(format!(
                "direction must be high or low, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::High => "high",
            Direction::Low => "low",
        })
    }
}

/// Preferred direction per metric. Defaults: high D, high R, low S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preference {
    pub d: Direction,
    pub r: Direction,
    pub s: Direction,
}

impl Default for Preference {
    fn default() -> Self {
        Preference {
            d: Direction::High,
            r: Direction::High,
            s: Direction::Low,
        }
    }
}

/// Parses `d=high,r=high,s=low`; omitted metrics keep their default.
impl FromStr for Preference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut pref = Preference::default();
        for item in s.split(',').filter(|i| !i.trim().is_empty()) {
            let (metric, dir) = item.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("preference item {item:?} is not metric=direction"))
            })?;
            let dir: Direction = dir.parse()?;
            match metric.trim().to_ascii_lowercase().as_str() {
                "d" => pref.d = dir,
                "r" => pref.r = dir,
                "s" => pref.s = dir,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown metric {other:?}; expected d, r or s"
                    )))
                }
            }
        }
        Ok(pref)
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={},r={},s={}", self.d, self.r, self.s)
    }
}

/// 1-based ranks with the best value first under `dir`. Equal values share
/// the mean of the positions they occupy.
pub fn fractional_ranks(values: &[f64], dir: Direction) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("cannot rank NaN".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        match dir {
            Direction::Low => c,
            Direction::High => c.reverse(),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    Ok(ranks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellerRanks {
    pub seller: String,
    pub rank_d: Option<f64>,
    pub rank_r: Option<f64>,
    pub rank_s: f64,
    pub average_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellerRanking {
    /// In input order.
    pub per_seller: Vec<SellerRanks>,
    /// Seller ids by ascending average rank, ties broken by id.
    pub final_order: Vec<String>,
}

/// Ranks sellers per metric and by the average of those ranks. When no
/// report carries featural scores only `S` is ranked.
pub fn rank_sellers(
    reports: &[(String, ValuationReport)],
    preference: &Preference,
) -> Result<SellerRanking> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(
            "ranking needs at least two sellers".into(),
        ));
    }
    let mut ids: Vec<&str> = reports.iter().map(|(id, _)| id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("seller ids must be unique".into()));
    }
    let featural = reports[0].1.featural.is_some();
    if reports
        .iter()
        .any(|(_, r)| r.featural.is_some() != featural)
    {
        return Err(Error::InvalidArgument(
            "reports mix featural and structural-only scores".into(),
        ));
    }

    let s: Vec<f64> = reports.iter().map(|(_, r)| r.s()).collect();
    let rank_s = fractional_ranks(&s, preference.s)?;
    let (rank_d, rank_r) = if featural {
        let d: Vec<f64> = reports.iter().filter_map(|(_, r)| r.diversity()).collect();
        let r: Vec<f64> = reports.iter().filter_map(|(_, r)| r.relevance()).collect();
        (
            Some(fractional_ranks(&d, preference.d)?),
            Some(fractional_ranks(&r, preference.r)?),
        )
    } else {
        (None, None)
    };

    let per_seller: Vec<SellerRanks> = reports
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let rd = rank_d.as_ref().map(|v| v[i]);
            let rr = rank_r.as_ref().map(|v| v[i]);
            let parts: Vec<f64> = [rd, rr, Some(rank_s[i])].into_iter().flatten().collect();
            SellerRanks {
                seller: id.clone(),
                rank_d: rd,
                rank_r: rr,
                rank_s: rank_s[i],
                average_rank: parts.iter().sum::<f64>() / parts.len() as f64,
            }
        })
        .collect();

    let mut order: Vec<&SellerRanks> = per_seller.iter().collect();
    order.sort_by(|a, b| {
        a.average_rank
            .total_cmp(&b.average_rank)
            .then_with(|| a.seller.cmp(&b.seller))
    });
    let final_order = order.iter().map(|r| r.seller.clone()).collect();
    Ok(SellerRanking {
        per_seller,
        final_order,
    })
}

/// The config with `proxy_nodes` pinned to the largest graph across all
/// sets, so every session sees the same proxy.
pub fn common_proxy_config(sets: &[&GraphSet], config: &SessionConfig) -> SessionConfig {
    let n = sets
        .iter()
        .map(|s| s.max_node_count())
        .max()
        .unwrap_or(2)
        .max(2);
    SessionConfig {
        proxy_nodes: Some(config.proxy_nodes.unwrap_or(n)),
        ..config.clone()
    }
}

/// One session per candidate, all against the same proxy. Results follow
/// the input order.
pub fn score_candidates(
    buyer: &GraphSet,
    candidates: &[GraphSet],
    config: &SessionConfig,
) -> Result<Vec<ValuationReport>> {
    config.validate()?;
    let mut all: Vec<&GraphSet> = vec![buyer];
    all.extend(candidates);
    let config = common_proxy_config(&all, config);
    candidates
        .par_iter()
        .map(|c| run_session(buyer, c, &config).map(|(report, _)| report))
        .collect()
}
