#pragma once

#define CONFWISE_VERSION "0.1.0"
