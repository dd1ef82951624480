#pragma once

#include "ast.hpp"
#include "lexer.hpp"
#include "parser.hpp"
