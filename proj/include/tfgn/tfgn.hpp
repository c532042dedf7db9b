#pragma once

#include <tfgn/core.hpp>
#include <tfgn/dataset.hpp>
#include <tfgn/semgraph.hpp>
#include <tfgn/neuralcore.hpp>
#include <tfgn/classify.hpp>
#include <tfgn/gan.hpp>
#include <tfgn/evaluate.hpp>
#include <tfgn/checkpoint.hpp>
#include <tfgn/config.hpp>
#include <tfgn/gradcheck.hpp>
