pub mod completion;
pub mod components;
pub mod extract;
pub mod features;
pub mod font;
pub mod layout;
pub mod lead;
pub mod pdf;
pub mod pipeline;
pub mod raster;
pub mod record;
pub mod recordio;
pub mod render;
pub mod scene;
pub mod synth;
pub mod textscrub;
pub mod tracefind;
