//! Faux-human search-and-rescue simulation and rescuer intent prediction.
//!
//! - [`world`]: building graph, victims, perturbations, mission clock.
//! - [`agents`]: biased faux-human rescuers and dataset generation.
//! - [`trajectory`]: trajectory model, log format, decision points, model inputs.
//! - [`evidence`]: sequential evidence accumulation over a belief vector.
//! - [`neural`]: small reverse-mode autograd, recurrent and transformer predictors.
//! - [`eval`]: accuracy protocol and comparison tables.

pub mod agents;
pub mod eval;
pub mod evidence;
pub mod neural;
pub mod geometry;
pub mod trajectory;
pub mod world;
