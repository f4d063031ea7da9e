//! Demand-bidding toolkit for a load aggregator: market settlement rules,
//! stochastic market and customer simulators, an episodic bidding
//! environment, a small dense-network library, two cooperating DDPG agents
//! (price and quantity), a supervised baseline and the experiment pipeline.

pub mod baseline;
pub mod config;
pub mod ddpg;
pub mod env;
pub mod market;
pub mod nn;
pub mod pipeline;
pub mod sim;
