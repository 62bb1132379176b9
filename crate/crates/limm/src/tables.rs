//! Fixed-stepsize coefficient tables for the LIMM and LIMM-W families,
//! orders 1-5, stored as exact decimal strings and parsed to the nearest
//! double on demand. Layouts: `alpha` covers indices -1..k-1 (so k+1 entries,
//! `alpha[0]` is alpha_{-1} = 1), `beta` covers 0..k-1, and `mu` covers
//! -1..k-1 (k+1 entries, `mu[0]` is mu_{-1}).

pub const LIMM_ALPHA_1: [&str; 2] = ["1", "-1"];
pub const LIMM_BETA_1: [&str; 1] = ["1"];
pub const LIMM_MU_1: [&str; 2] = ["1", "-1"];
pub const LIMM_ALPHA_2: [&str; 3] = ["1", "-1.33333333333333333333333333333333333333333333", "0.333333333333333333333333333333333333333333333"];
pub const LIMM_BETA_2: [&str; 2] = ["0.666666666666666666666666666666666666666666667", "0"];
pub const LIMM_MU_2: [&str; 3] = ["0.666666666666666666666666666666666666666666667", "-0.666666666666666666666666666666666666666666667", "0"];
pub const LIMM_ALPHA_3: [&str; 4] = ["1", "-1.67999730384623589435950410860119296101979256", "0.775729752505499061452599928814848993097318309", "-0.0957324486592631670930958202136560320775257461"];
pub const LIMM_BETA_3: [&str; 3] = ["0.545454545454545454545454545454545454545454545", "-0.282973627162980495226057848777709762819504890", "0.153254226521462313414195014935627379331783527"];
pub const LIMM_MU_3: [&str; 4] = ["0.513221628928545977485415267472456093450618441", "-0.459762679564386940242585044806882137995350582", "0.0997952771573032761713647922700534238765156687", "-0.153254226521462313414195014935627379331783527"];
pub const LIMM_ALPHA_4: [&str; 5] = ["1", "-2.11013044584659593194785907436365107438784294", "1.77077747150206503558452840172383020365762413", "-0.758842141397772950442944971552923786518349180", "0.0981951157423038468062756441927446572485679948"];
pub const LIMM_BETA_4: [&str; 4] = ["0.48", "-0.727289007271546251766060044824850776973371466", "0.937261611311771140668285769066874402712271898", "-0.237651139973655564019691115438240228105530182"];
pub const LIMM_MU_4: [&str; 5] = ["0.485605563049283319035042049977438838287280670", "-0.578672925281180623555738059944162997149494998", "0.682043570615050119072093889011845538087929632", "-0.826627348356808378571088994483361607331245486", "0.237651139973655564019691115438240228105530182"];
pub const LIMM_ALPHA_5: [&str; 6] = ["1", "-2.53306135973096442252969331820763427113978126", "2.83959202909428641371334933769674673368483934", "-1.70152000299301125256981230953871397903906755", "0.490319052530629096706615388430428556235486104", "-0.0953297189009398353204590983808270397414766257"];
pub const LIMM_BETA_5: [&str; 5] = ["0.437956204379562043795620437956204379562043796", "-1.42606874305609615638613042863039398334524218", "2.39802531125438500718172033183883522914297893", "-1.19380503850772799692357215074679502561818170", "0.257701960833485244920627319194853114911145115"];
pub const LIMM_MU_5: [&str; 6] = ["0.452684111084701195226189711756743477816872633", "-0.638569303330039723584595287434631031536633850", "1.40712670682755674737289883657718897167708604", "-2.18705530783242054859514840682475042329999612", "1.22351575408368757450128246512030212025381640", "-0.257701960833485244920627319194853114911145115"];

pub const LIMMW_ALPHA_1: [&str; 2] = ["1", "-1"];
pub const LIMMW_BETA_1: [&str; 1] = ["1"];
pub const LIMMW_MU_1: [&str; 2] = ["1", "-1"];
pub const LIMMW_ALPHA_2: [&str; 3] = ["1", "-1.09897653530478998495039998635227499098540330", "0.0989765353047899849503999863522749909854032979"];
pub const LIMMW_BETA_2: [&str; 2] = ["1.45051173234760500752480000682386250450729835", "-0.549488267652394992475199993176137495492701649"];
pub const LIMMW_MU_2: [&str; 3] = ["0.549488267652394992475199993176137495492701649", "-1.09897653530478998495039998635227499098540330", "0.549488267652394992475199993176137495492701649"];
pub const LIMMW_ALPHA_3: [&str; 4] = ["1", "-1.62019448973975510591952021235043977189149474", "0.677716954813382046591937251532007574482625032", "-0.0575224650736269406724170391815678025911302951"];
pub const LIMMW_BETA_3: [&str; 3] = ["1.65345875718563312747749849158885277816261633", "-1.70844801644408544349806878211258131286690963", "0.492317234592324150773467117354856565403928851"];
pub const LIMMW_MU_3: [&str; 4] = ["0.492317234592324150773467117354856565403928851", "-1.47695170377697245232040135206456969621178655", "1.47695170377697245232040135206456969621178655", "-0.492317234592324150773467117354856565403928851"];
pub const LIMMW_ALPHA_4: [&str; 5] = ["1", "-1.91726416235824412036885015953139160589153790", "1.34565566631402000730925026917243704548949870", "-0.485658020398818011026143538675906585936079395", "0.0572665164430421240857434290348611463381185873"];
pub const LIMMW_BETA_4: [&str; 4] = ["1.92745685493237437106892520939756537337666998", "-2.94052487296526421401475976919118933606146403", "1.91947277294993778226834696130534112349195528", "-0.452543929762558296836705880436924473438856916"];
pub const LIMMW_MU_4: [&str; 5] = ["0.452543929762558296836705880436924473438856916", "-1.81017571905023318734682352174769789375542766", "2.71526357857534978102023528262154684063314150", "-1.81017571905023318734682352174769789375542766", "0.452543929762558296836705880436924473438856916"];
pub const LIMMW_ALPHA_5: [&str; 6] = ["1", "-2.26585868787689297881877092960101926390220477", "2.37537077311757999350848087661376280117698390", "-1.36488771049888909339085868400161038311262329", "0.324866045745041024183044678990525769890688860", "-0.0694904204868389454818959420016589240528447024"];
pub const LIMMW_BETA_5: [&str; 5] = ["2.16397123591143978639932687315554580929320203", "-4.41887465282567121554072278120346831672520652", "4.61295478936526027168294292846822069585482417", "-2.13021398601055757679322352650239906590794967", "0.429930806151959636903362728506617229072704889"];
pub const LIMMW_MU_5: [&str; 6] = ["0.429930806151959636903362728506617229072704889", "-2.14965403075979818451681364253308614536352445", "4.29930806151959636903362728506617229072704889", "-4.29930806151959636903362728506617229072704889", "2.14965403075979818451681364253308614536352445", "-0.429930806151959636903362728506617229072704889"];

