//! Ingestion, configuration, simulation, report fusion and the end-to-end run.

mod config;
mod demo;
mod ingest;
mod report;
mod run;
pub mod sim;

pub use config::{sub_seed, BerryConfig, FlowConfig, Inputs, NowcastConfig, PipelineConfig, RiskConfig, Stream};
pub use demo::{write_demo, DemoOptions, DEMO_CONFIG, DEMO_TEMP_MODEL};
pub use ingest::{
    format_timestamp, join_targets, parse_timestamp, read_frames, read_targets, read_tiles, read_weather,
    targets_to_csv, weather_to_csv, FrameEntry, Ingested, TargetRecord, TileEntry, FRAMES_MANIFEST, WEATHER_HEADER,
};
pub use report::{assemble_report, cell_densities, is_flagged, CellDensity, FlaggedCell, HorizonRisk, RiskReport};
pub use run::{
    count_tiles, estimate_motion, forecast_from_frames, forecast_to_csv, latest_weather, run_pipeline, segment,
    tile_extent, validated_flow, write_outputs, PipelineOutput, SkyMotion, DENSITY_FILE, FORECAST_FILE,
    FORECAST_HEADER, REPORT_JSON_FILE, REPORT_TEXT_FILE,
};
