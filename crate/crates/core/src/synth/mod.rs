//! Synthetic stand-ins for recorded data: multi-emitter IQ captures with
//! per-device hardware impairments, and the Mackey-Glass series.

mod dataset;
mod emitter;
mod mackey;

pub use dataset::{gen_dataset, DeviceStats, GeneratedDataset, Manifest};
pub use emitter::{
    clean_waveform, gen_emitters, synth_burst, synth_burst_with, BurstVariation, EmitterModel,
    ImpairmentRanges, Payload, SynthSpec,
};
pub use mackey::{gen_mackey_glass, MackeyGlassSpec};
