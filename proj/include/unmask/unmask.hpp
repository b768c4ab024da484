#pragma once

#include "unmask/error.hpp"
#include "unmask/gf.hpp"
#include "unmask/info.hpp"
#include "unmask/oracle.hpp"
#include "unmask/rng.hpp"
#include "unmask/rsx.hpp"
#include "unmask/sched.hpp"
#include "unmask/verify.hpp"
