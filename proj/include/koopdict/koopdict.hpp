#pragma once

#include "koopdict/autoencoder.hpp"
#include "koopdict/config.hpp"
#include "koopdict/delay.hpp"
#include "koopdict/dynsys.hpp"
#include "koopdict/koopman.hpp"
#include "koopdict/observable.hpp"
#include "koopdict/pipeline.hpp"
