//! Order-book domain types and LOBSTER-style file IO.

mod lobster;
mod persist;
mod types;

pub use lobster::{
    format_time, parse_message_file, parse_orderbook_file, parse_time, resample_wall_clock,
    write_message_file, write_orderbook_file,
};
pub use persist::{
    read_labels, read_series_dir, read_spans, write_labels, write_series_dir, write_spans,
    SeriesFiles,
};
pub use types::{
    AnomalySpan, BookSide, EventKind, Label, LabeledSeries, LobSnapshot, Side, Timestamp,
    TradeEvent,
};
