//! Discrete-space partial differential hybrid automata: meshes, difference
//! schemes, the automaton itself, its hybrid executions and two reference
//! models.

pub mod automaton;
pub mod error;
pub mod executor;
pub mod mesh;
pub mod models;
pub mod schemes;

pub use automaton::{discretize_model, discretize_model_with, Dspdha, ModelDescription};
pub use error::{Error, Result};
pub use executor::{simulate, ExecutionClass, Integrator, SimOptions};
pub use mesh::{discretize_domain, DiscreteDomain, DiscretePartition, DiscreteState, FieldValues, ModeId, SpaceDomain};
