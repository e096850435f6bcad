use cosmwasm_schema::cw_serde;
use cw_storage_plus::Map;
use cosmwasm_std::{Addr, Uint128};

#[cw_serde]
#[derive(Default)]
pub struct UserInfo {
    pub total_tokens: Uint128,
    pub voting_power: Uint128,
    pub released_time: u64,
}

pub const VOTING_POWER: Map<&Addr, UserInfo> = Map::new("voting_power");
