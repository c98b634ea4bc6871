//! Bid-log file format: JSON Lines with a versioned header.
//!
//! Line 1 is a [`LogHeader`]. Every following line is one page view, a
//! serialized [`PvRequest`] whose candidates carry raw (uncalibrated)
//! pCVRs. Campaign baselines and budgets live in the header so that
//! candidate lines stay small.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Campaign, CampaignId, CategoryId, PvRequest};

pub const FORMAT_NAME: &str = "ocpc-bidlog";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BidLogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("missing header line")]
    MissingHeader,
    #[error("not a bid log (format {0:?})")]
    WrongFormat(String),
    #[error("unsupported bid log version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignEntry {
    pub campaign_id: CampaignId,
    pub category_id: CategoryId,
    /// `None` is unlimited.
    pub budget: Option<f64>,
    /// Trimmed-mean baseline pCVR.
    pub expected_cvr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub campaigns: Vec<CampaignEntry>,
    /// Echo of whatever produced the log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl LogHeader {
    pub fn new(campaigns: Vec<CampaignEntry>) -> Self {
        LogHeader {
            format: FORMAT_NAME.to_owned(),
            version: FORMAT_VERSION,
            campaigns,
            generator: None,
        }
    }

    pub fn campaigns(&self) -> Vec<Campaign> {
        self.campaigns
            .iter()
            .map(|e| Campaign {
                campaign_id: e.campaign_id.clone(),
                category_id: e.category_id.clone(),
                budget: e.budget,
            })
            .collect()
    }

    pub fn baselines(&self) -> HashMap<CampaignId, f64> {
        self.campaigns
            .iter()
            .filter_map(|e| e.expected_cvr.map(|x| (e.campaign_id.clone(), x)))
            .collect()
    }
}

pub struct BidLogWriter<W: Write> {
    out: W,
    records: usize,
}

impl<W: Write> BidLogWriter<W> {
    pub fn new(mut out: W, header: &LogHeader) -> Result<Self, BidLogError> {
        serde_json::to_writer(&mut out, header).map_err(|e| BidLogError::Parse { line: 1, source: e })?;
        out.write_all(b"\n")?;
        Ok(BidLogWriter { out, records: 0 })
    }

    pub fn write(&mut self, pv: &PvRequest) -> Result<(), BidLogError> {
        serde_json::to_writer(&mut self.out, pv)
            .map_err(|e| BidLogError::Parse { line: self.records + 2, source: e })?;
        self.out.write_all(b"\n")?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn finish(mut self) -> Result<W, BidLogError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streams page views one line at a time.
pub struct BidLogReader<R: BufRead> {
    input: R,
    header: LogHeader,
    line: usize,
    buf: String,
}

impl<R: BufRead> BidLogReader<R> {
    pub fn new(mut input: R) -> Result<Self, BidLogError> {
        let mut buf = String::new();
        if input.read_line(&mut buf)? == 0 {
            return Err(BidLogError::MissingHeader);
        }
        let header: LogHeader =
            serde_json::from_str(&buf).map_err(|e| BidLogError::Parse { line: 1, source: e })?;
        if header.format != FORMAT_NAME {
            return Err(BidLogError::WrongFormat(header.format));
        }
        if header.version != FORMAT_VERSION {
            return Err(BidLogError::UnsupportedVersion(header.version));
        }
        Ok(BidLogReader { input, header, line: 1, buf })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn into_inner(self) -> R {
        self.input
    }
}

impl<R: BufRead> Iterator for BidLogReader<R> {
    type Item = Result<PvRequest, BidLogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            if self.buf.trim().is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str(&self.buf)
                    .map_err(|e| BidLogError::Parse { line: self.line, source: e }),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AdCandidate;

    fn sample() -> (LogHeader, Vec<PvRequest>) {
        let header = LogHeader::new(vec![CampaignEntry {
            campaign_id: "c1".into(),
            category_id: "k1".into(),
            budget: Some(10.0),
            expected_cvr: Some(0.01),
        }]);
        let mut cand = AdCandidate::new("c1", 1.25, 0.031);
        cand.pasr = Some(0.02);
        let pv = PvRequest {
            pv_id: "pv0".into(),
            timestamp: 5,
            user_id: "u1".into(),
            position_id: "p0".into(),
            n_slots: 3,
            candidates: vec![cand],
        };
        (header, vec![pv.clone(), PvRequest { pv_id: "pv1".into(), ..pv }])
    }

    #[test]
    fn write_then_read() {
        let (header, pvs) = sample();
        let mut w = BidLogWriter::new(Vec::new(), &header).unwrap();
        for pv in &pvs {
            w.write(pv).unwrap();
        }
        assert_eq!(w.records(), 2);
        let bytes = w.finish().unwrap();
        let r = BidLogReader::new(&bytes[..]).unwrap();
        assert_eq!(r.header(), &header);
        let back: Vec<_> = r.map(Result::unwrap).collect();
        assert_eq!(back, pvs);
    }

    #[test]
    fn header_only_log_is_empty() {
        let (header, _) = sample();
        let bytes = BidLogWriter::new(Vec::new(), &header).unwrap().finish().unwrap();
        assert_eq!(BidLogReader::new(&bytes[..]).unwrap().count(), 0);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(BidLogReader::new(&b""[..]), Err(BidLogError::MissingHeader)));
        let other = br#"{"format":"something","version":1}"#;
        assert!(matches!(BidLogReader::new(&other[..]), Err(BidLogError::WrongFormat(_))));
        let future = br#"{"format":"ocpc-bidlog","version":9}"#;
        assert!(matches!(BidLogReader::new(&future[..]), Err(BidLogError::UnsupportedVersion(9))));
    }

    #[test]
    fn bad_line_reports_its_number() {
        let data = b"{\"format\":\"ocpc-bidlog\",\"version\":1}\n\n{oops\n";
        let mut r = BidLogReader::new(&data[..]).unwrap();
        match r.next() {
            Some(Err(BidLogError::Parse { line, .. })) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
