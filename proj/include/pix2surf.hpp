#pragma once

#include "pix2surf/chart2mesh.hpp"
#include "pix2surf/cli.hpp"
#include "pix2surf/config.hpp"
#include "pix2surf/dataset.hpp"
#include "pix2surf/losses.hpp"
#include "pix2surf/metrics.hpp"
#include "pix2surf/netcore.hpp"
#include "pix2surf/trainer.hpp"
