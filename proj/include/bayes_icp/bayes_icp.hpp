#pragma once

#include "bayes_icp/analysis.hpp"
#include "bayes_icp/cloud_io.hpp"
#include "bayes_icp/correspondence.hpp"
#include "bayes_icp/error.hpp"
#include "bayes_icp/geometry.hpp"
#include "bayes_icp/icp.hpp"
#include "bayes_icp/kdtree.hpp"
#include "bayes_icp/parallel.hpp"
#include "bayes_icp/point_cloud.hpp"
#include "bayes_icp/random.hpp"
#include "bayes_icp/sampler.hpp"
#include "bayes_icp/synthetic.hpp"
#include "bayes_icp/version.hpp"
