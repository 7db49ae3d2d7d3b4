use std::io;

/// CSV column names, in order.
pub const CSV_HEADER: [&str; 9] = [
    "time",
    "msg_size_avg",
    "msg_size_max",
    "delivery_ratio",
    "logs_created",
    "logs_recv_once_pct",
    "logs_recv_twice_pct",
    "avg_collect_delay_s",
    "warnings_active",
];

/// One simulated second of measurements.
///
/// The network columns describe messages sent during `(time - 1, time]`.
/// Log columns are cumulative; `avg_collect_delay_s` averages the logs first
/// collected during that second and is `None` when there were none.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub time: u32,
    pub msg_size_avg: f64,
    pub msg_size_max: usize,
    pub delivery_ratio: f64,
    pub logs_created: u32,
    pub logs_recv_once_pct: f64,
    pub logs_recv_twice_pct: f64,
    pub avg_collect_delay_s: Option<f64>,
    pub warnings_active: u32,
}

impl MetricsRow {
    fn record(&self) -> [String; 9] {
        [
            self.time.to_string(),
            format!("{:.2}", self.msg_size_avg),
            self.msg_size_max.to_string(),
            format!("{:.4}", self.delivery_ratio),
            self.logs_created.to_string(),
            format!("{:.2}", self.logs_recv_once_pct),
            format!("{:.2}", self.logs_recv_twice_pct),
            self.avg_collect_delay_s
                .map(|d| format!("{d:.3}"))
                .unwrap_or_default(),
            self.warnings_active.to_string(),
        ]
    }
}

/// Per-second rows plus whole-run message counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub rows: Vec<MetricsRow>,
    pub messages_sent: u64,
    pub messages_over_budget: u64,
    pub max_message_size: usize,
    /// Every message size, in send order.
    pub message_sizes: Vec<usize>,
}

impl MetricsSeries {
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Share of messages within the payload budget, 1 when nothing was sent.
    pub fn within_budget_fraction(&self) -> f64 {
        if self.messages_sent == 0 {
            1.0
        } else {
            1.0 - self.messages_over_budget as f64 / self.messages_sent as f64
        }
    }
}
