#ifndef COPSENS_COPSENS_HPP
#define COPSENS_COPSENS_HPP

#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>
#include <copsens/outcome.hpp>
#include <copsens/copula.hpp>
#include <copsens/bounds.hpp>
#include <copsens/calibrate.hpp>
#include <copsens/mcc.hpp>
#include <copsens/binary.hpp>
#include <copsens/simulate.hpp>
#include <copsens/proxy.hpp>
#include <copsens/io.hpp>

#endif  // COPSENS_COPSENS_HPP
