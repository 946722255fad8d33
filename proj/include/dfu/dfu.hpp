#pragma once

#include "dfu/api_server.hpp"
#include "dfu/base64.hpp"
#include "dfu/client.hpp"
#include "dfu/clock.hpp"
#include "dfu/detection.hpp"
#include "dfu/detector.hpp"
#include "dfu/domain.hpp"
#include "dfu/intake.hpp"
#include "dfu/job_queue.hpp"
#include "dfu/png.hpp"
#include "dfu/result.hpp"
#include "dfu/semver.hpp"
#include "dfu/serialization.hpp"
#include "dfu/store.hpp"
#include "dfu/synthetic.hpp"
#include "dfu/worker.hpp"
