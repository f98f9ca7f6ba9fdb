pub mod cube;
pub mod networks;
pub mod optim;
pub mod pipeline;
pub mod scattering;
pub mod stack;
pub mod synthetic;
pub mod tensor;
