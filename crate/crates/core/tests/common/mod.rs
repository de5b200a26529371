pub mod conic_instances;
