#pragma once

#include "sealdb/bench.hpp"
#include "sealdb/bytes.hpp"
#include "sealdb/cipher.hpp"
#include "sealdb/decimal.hpp"
#include "sealdb/error.hpp"
#include "sealdb/executor.hpp"
#include "sealdb/protect.hpp"
#include "sealdb/query.hpp"
#include "sealdb/storage.hpp"
#include "sealdb/value.hpp"
